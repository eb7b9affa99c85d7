#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace heapguard {

enum class Opcode {
  Const,
  Add,
  Sub,
  Mul,
  CmpLe,
  CmpLt,
  CmpEq,
  Br,
  Jmp,
  Call,
  Ret,
  Alloc,
  Calloc,
  Realloc,
  Free,
  Store,
  Load,
  StoreBytes,
  Input,
  ToggleSensitive,
  Print,
  Halt,
};

std::string_view opcode_name(Opcode op) noexcept;
bool is_arith(Opcode op) noexcept;

using RegId = std::uint32_t;

struct Operand {
  enum class Kind { Reg, Imm };
  Kind kind = Kind::Imm;
  RegId reg = 0;
  std::int64_t imm = 0;

  static Operand make_reg(RegId r) { return {Kind::Reg, r, 0}; }
  static Operand make_imm(std::int64_t v) { return {Kind::Imm, 0, v}; }
  bool is_reg() const { return kind == Kind::Reg; }

  friend bool operator==(const Operand&, const Operand&) = default;
};

struct FieldRef {
  std::string type;
  std::string field;

  friend bool operator==(const FieldRef&, const FieldRef&) = default;
};

/// Static instruction identity: function index + position in its body.
struct InstrRef {
  std::uint32_t fn = 0;
  std::uint32_t index = 0;

  friend bool operator==(const InstrRef&, const InstrRef&) = default;
  friend auto operator<=>(const InstrRef&, const InstrRef&) = default;
};

struct Instruction {
  std::string label;
  Opcode op = Opcode::Halt;
  std::optional<RegId> dest;
  std::vector<Operand> args;
  /// Branch/jump targets as written, resolved into `target_index`.
  std::vector<std::string> targets;
  std::vector<std::uint32_t> target_index;
  std::string callee;
  std::uint32_t callee_index = 0;
  std::uint32_t width = 0;            // store/load
  std::vector<std::uint8_t> bytes;    // store_bytes payload (after repetition)
  std::optional<std::string> type_ann;
  std::optional<FieldRef> prov;
  bool toggle_on = false;
  int line = 0;

  bool is_terminator() const {
    return op == Opcode::Br || op == Opcode::Jmp || op == Opcode::Ret || op == Opcode::Halt;
  }

  /// Equality ignores source line numbers.
  friend bool operator==(const Instruction& a, const Instruction& b) {
    return a.label == b.label && a.op == b.op && a.dest == b.dest && a.args == b.args &&
           a.targets == b.targets && a.target_index == b.target_index && a.callee == b.callee &&
           a.callee_index == b.callee_index && a.width == b.width && a.bytes == b.bytes &&
           a.type_ann == b.type_ann && a.prov == b.prov && a.toggle_on == b.toggle_on;
  }
};

struct Function {
  std::string name;
  std::vector<RegId> params;
  std::vector<std::string> reg_names;  // RegId -> "r7"
  std::vector<Instruction> body;
  std::unordered_map<std::string, std::uint32_t> labels;

  std::optional<std::uint32_t> find_label(std::string_view label) const;

  friend bool operator==(const Function& a, const Function& b) {
    return a.name == b.name && a.params == b.params && a.reg_names == b.reg_names &&
           a.body == b.body;
  }
};

struct Program {
  std::vector<Function> functions;
  std::uint32_t main_index = 0;

  const Function& main() const { return functions[main_index]; }
  const Instruction& at(InstrRef ref) const { return functions[ref.fn].body[ref.index]; }
  std::optional<std::uint32_t> find_function(std::string_view name) const;
  /// "fn:label"
  std::string site_name(InstrRef ref) const;
  /// Accepts "fn:label", or a bare label resolved in main.
  std::optional<InstrRef> resolve_site(std::string_view site) const;

  friend bool operator==(const Program&, const Program&) = default;
};

/// Parses and validates a program. Throws Error with ParseError, LinkError or
/// ValidationError; messages carry the 1-based source line.
Program parse_program(std::string_view text);

/// Canonical text form; parse_program(serialize_program(p)) == p.
std::string serialize_program(const Program& program);

}  // namespace heapguard
