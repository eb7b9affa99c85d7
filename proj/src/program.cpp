#include "heapguard/program.hpp"

#include <cctype>
#include <charconv>
#include <set>

#include <fmt/format.h>

#include "heapguard/cfg.hpp"
#include "heapguard/error.hpp"

namespace heapguard {

namespace {

struct OpcodeInfo {
  std::string_view name;
  Opcode op;
};

constexpr OpcodeInfo kOpcodes[] = {
    {"const", Opcode::Const},       {"add", Opcode::Add},
    {"sub", Opcode::Sub},           {"mul", Opcode::Mul},
    {"cmp_le", Opcode::CmpLe},      {"cmp_lt", Opcode::CmpLt},
    {"cmp_eq", Opcode::CmpEq},      {"br", Opcode::Br},
    {"jmp", Opcode::Jmp},           {"call", Opcode::Call},
    {"ret", Opcode::Ret},           {"alloc", Opcode::Alloc},
    {"calloc", Opcode::Calloc},     {"realloc", Opcode::Realloc},
    {"free", Opcode::Free},         {"store", Opcode::Store},
    {"load", Opcode::Load},         {"store_bytes", Opcode::StoreBytes},
    {"input", Opcode::Input},       {"toggle_sensitive", Opcode::ToggleSensitive},
    {"print", Opcode::Print},       {"halt", Opcode::Halt},
};

// ---------------------------------------------------------------------------
// Lexer (one source line at a time)
// ---------------------------------------------------------------------------

struct Token {
  enum class Kind { Ident, Int, Bytes, Punct };
  Token(Kind k, std::string t) : kind(k), text(std::move(t)) {}

  Kind kind;
  std::string text;
  std::int64_t value = 0;
  std::vector<std::uint8_t> bytes;
};

[[noreturn]] void fail(ErrorCode code, int line, const std::string& msg) {
  throw Error(code, fmt::format("line {}: {}", line, msg));
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::int64_t parse_int(std::string_view text, int line) {
  bool neg = false;
  std::string_view digits = text;
  if (!digits.empty() && digits.front() == '-') {
    neg = true;
    digits.remove_prefix(1);
  }
  int base = 10;
  if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
    base = 16;
    digits.remove_prefix(2);
  }
  std::uint64_t magnitude = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), magnitude, base);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty()) {
    fail(ErrorCode::ParseError, line, fmt::format("malformed integer '{}'", text));
  }
  // Hex literals may spell any 64-bit pattern; decimals must fit signed.
  if (base == 10 && magnitude > (neg ? std::uint64_t{1} << 63 : (std::uint64_t{1} << 63) - 1)) {
    fail(ErrorCode::ParseError, line, fmt::format("integer '{}' out of range", text));
  }
  const auto value = static_cast<std::int64_t>(magnitude);
  return neg ? static_cast<std::int64_t>(0 - magnitude) : value;
}

std::vector<Token> lex_line(std::string_view line, int lineno) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      break;
    } else if (ident_start(c)) {
      std::size_t j = i;
      while (j < line.size() && ident_char(line[j])) ++j;
      out.push_back({Token::Kind::Ident, std::string(line.substr(i, j - i))});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '-' && i + 1 < line.size() &&
                std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
      std::size_t j = i + 1;
      while (j < line.size() && std::isalnum(static_cast<unsigned char>(line[j]))) ++j;
      Token t{Token::Kind::Int, std::string(line.substr(i, j - i))};
      t.value = parse_int(t.text, lineno);
      out.push_back(std::move(t));
      i = j;
    } else if (c == '"') {
      Token t{Token::Kind::Bytes, ""};
      std::size_t j = i + 1;
      bool closed = false;
      while (j < line.size()) {
        const char d = line[j];
        if (d == '"') {
          closed = true;
          ++j;
          break;
        }
        if (d != '\\') {
          t.bytes.push_back(static_cast<std::uint8_t>(d));
          ++j;
          continue;
        }
        if (j + 1 >= line.size()) break;
        const char e = line[j + 1];
        j += 2;
        switch (e) {
          case 'n': t.bytes.push_back('\n'); break;
          case 't': t.bytes.push_back('\t'); break;
          case '0': t.bytes.push_back(0); break;
          case '\\': t.bytes.push_back('\\'); break;
          case '"': t.bytes.push_back('"'); break;
          case 'x': {
            if (j + 2 > line.size() || hex_digit(line[j]) < 0 || hex_digit(line[j + 1]) < 0) {
              fail(ErrorCode::ParseError, lineno, "bad \\x escape in byte string");
            }
            t.bytes.push_back(static_cast<std::uint8_t>(hex_digit(line[j]) * 16 +
                                                        hex_digit(line[j + 1])));
            j += 2;
            break;
          }
          default:
            fail(ErrorCode::ParseError, lineno, fmt::format("unknown escape '\\{}'", e));
        }
      }
      if (!closed) fail(ErrorCode::ParseError, lineno, "unterminated byte string");
      out.push_back(std::move(t));
      i = j;
    } else if (std::string_view(":=(),{}*").find(c) != std::string_view::npos) {
      out.push_back({Token::Kind::Punct, std::string(1, c)});
      ++i;
    } else {
      fail(ErrorCode::ParseError, lineno, fmt::format("unexpected character '{}'", c));
    }
  }
  return out;
}

bool is_register_name(std::string_view s) {
  if (s.size() < 2 || s[0] != 'r') return false;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

bool is_plain_ident(std::string_view s) {
  return !s.empty() && s.find('.') == std::string_view::npos;
}

// ---------------------------------------------------------------------------
// Line parser
// ---------------------------------------------------------------------------

class LineParser {
 public:
  LineParser(std::vector<Token> toks, int line, Function& fn)
      : toks_(std::move(toks)), line_(line), fn_(fn) {}

  bool done() const { return pos_ >= toks_.size(); }
  const Token* peek(std::size_t ahead = 0) const {
    return pos_ + ahead < toks_.size() ? &toks_[pos_ + ahead] : nullptr;
  }
  bool peek_punct(char c, std::size_t ahead = 0) const {
    const Token* t = peek(ahead);
    return t && t->kind == Token::Kind::Punct && t->text[0] == c;
  }
  bool peek_ident(std::string_view s) const {
    const Token* t = peek();
    return t && t->kind == Token::Kind::Ident && t->text == s;
  }

  const Token& next(const char* what) {
    if (done()) fail(ErrorCode::ParseError, line_, fmt::format("expected {}", what));
    return toks_[pos_++];
  }
  void expect_punct(char c) {
    const Token& t = next("punctuation");
    if (t.kind != Token::Kind::Punct || t.text[0] != c) {
      fail(ErrorCode::ParseError, line_, fmt::format("expected '{}', found '{}'", c, t.text));
    }
  }
  std::string ident(const char* what) {
    const Token& t = next(what);
    if (t.kind != Token::Kind::Ident) {
      fail(ErrorCode::ParseError, line_, fmt::format("expected {}, found '{}'", what, t.text));
    }
    return t.text;
  }
  RegId reg() {
    const std::string name = ident("register");
    if (!is_register_name(name)) {
      fail(ErrorCode::ParseError, line_, fmt::format("'{}' is not a register", name));
    }
    return intern(name);
  }
  Operand operand() {
    const Token& t = next("operand");
    if (t.kind == Token::Kind::Int) return Operand::make_imm(t.value);
    if (t.kind == Token::Kind::Ident && is_register_name(t.text)) {
      return Operand::make_reg(intern(t.text));
    }
    fail(ErrorCode::ParseError, line_, fmt::format("expected register or integer, found '{}'", t.text));
  }
  std::string label() {
    const std::string l = ident("label");
    if (!is_plain_ident(l)) fail(ErrorCode::ParseError, line_, fmt::format("bad label '{}'", l));
    return l;
  }

  RegId intern(const std::string& name) {
    for (RegId r = 0; r < fn_.reg_names.size(); ++r) {
      if (fn_.reg_names[r] == name) return r;
    }
    fn_.reg_names.push_back(name);
    return static_cast<RegId>(fn_.reg_names.size() - 1);
  }

  void annotations(Instruction& ins, bool allow_type, bool allow_field) {
    while (!done()) {
      const std::string key = ident("annotation");
      expect_punct('=');
      const std::string value = ident("annotation value");
      if (key == "type" && allow_type) {
        if (!is_plain_ident(value)) {
          fail(ErrorCode::ParseError, line_, fmt::format("bad type name '{}'", value));
        }
        ins.type_ann = value;
      } else if (key == "field" && allow_field) {
        const auto dot = value.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == value.size() ||
            value.find('.', dot + 1) != std::string::npos) {
          fail(ErrorCode::ParseError, line_, fmt::format("field annotation '{}' is not T.f", value));
        }
        ins.prov = FieldRef{value.substr(0, dot), value.substr(dot + 1)};
      } else {
        fail(ErrorCode::ParseError, line_, fmt::format("annotation '{}' not allowed here", key));
      }
    }
  }

  Instruction instruction() {
    Instruction ins;
    ins.line = line_;
    ins.label = label();
    expect_punct(':');

    if (peek() && peek()->kind == Token::Kind::Ident && is_register_name(peek()->text) &&
        peek_punct('=', 1)) {
      ins.dest = reg();
      expect_punct('=');
    }
    const std::string mnemonic = ident("opcode");
    decode_mnemonic(mnemonic, ins);

    auto need_dest = [&](bool needed) {
      if (needed && !ins.dest) {
        fail(ErrorCode::ParseError, line_, fmt::format("'{}' needs a destination register", mnemonic));
      }
      if (!needed && ins.dest) {
        fail(ErrorCode::ParseError, line_, fmt::format("'{}' does not produce a value", mnemonic));
      }
    };

    switch (ins.op) {
      case Opcode::Const: {
        need_dest(true);
        const Token& t = next("integer");
        if (t.kind != Token::Kind::Int) fail(ErrorCode::ParseError, line_, "const needs an integer");
        ins.args.push_back(Operand::make_imm(t.value));
        break;
      }
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::CmpLe:
      case Opcode::CmpLt:
      case Opcode::CmpEq:
        need_dest(true);
        ins.args.push_back(operand());
        ins.args.push_back(operand());
        break;
      case Opcode::Br:
        need_dest(false);
        ins.args.push_back(operand());
        ins.targets.push_back(label());
        ins.targets.push_back(label());
        break;
      case Opcode::Jmp:
        need_dest(false);
        ins.targets.push_back(label());
        break;
      case Opcode::Call:
        ins.callee = ident("function name");
        while (!done()) ins.args.push_back(operand());
        break;
      case Opcode::Ret:
        need_dest(false);
        if (!done()) ins.args.push_back(operand());
        break;
      case Opcode::Alloc:
        need_dest(true);
        ins.args.push_back(operand());
        annotations(ins, true, false);
        break;
      case Opcode::Calloc:
        need_dest(true);
        ins.args.push_back(operand());
        ins.args.push_back(operand());
        annotations(ins, true, false);
        break;
      case Opcode::Realloc:
        need_dest(true);
        ins.args.push_back(operand());
        ins.args.push_back(operand());
        break;
      case Opcode::Free:
        need_dest(false);
        ins.args.push_back(operand());
        break;
      case Opcode::Store:
        need_dest(false);
        ins.args.push_back(operand());
        ins.args.push_back(operand());
        annotations(ins, false, true);
        break;
      case Opcode::Load:
        need_dest(true);
        ins.args.push_back(operand());
        annotations(ins, false, true);
        break;
      case Opcode::StoreBytes: {
        need_dest(false);
        ins.args.push_back(operand());
        const Token& t = next("byte string");
        if (t.kind != Token::Kind::Bytes) {
          fail(ErrorCode::ParseError, line_, "store_bytes needs a quoted byte string");
        }
        std::vector<std::uint8_t> unit = t.bytes;
        std::int64_t repeat = 1;
        if (peek_punct('*')) {
          expect_punct('*');
          const Token& n = next("repeat count");
          if (n.kind != Token::Kind::Int || n.value <= 0 || n.value > (1 << 20)) {
            fail(ErrorCode::ParseError, line_, "repeat count must be in 1..1048576");
          }
          repeat = n.value;
        }
        for (std::int64_t k = 0; k < repeat; ++k) {
          ins.bytes.insert(ins.bytes.end(), unit.begin(), unit.end());
        }
        if (ins.bytes.empty()) fail(ErrorCode::ParseError, line_, "store_bytes payload is empty");
        annotations(ins, false, true);
        break;
      }
      case Opcode::Input:
        need_dest(true);
        break;
      case Opcode::ToggleSensitive: {
        need_dest(false);
        const std::string state = ident("on/off");
        if (state != "on" && state != "off") {
          fail(ErrorCode::ParseError, line_, "toggle_sensitive takes 'on' or 'off'");
        }
        ins.toggle_on = state == "on";
        break;
      }
      case Opcode::Print:
        need_dest(false);
        ins.args.push_back(operand());
        break;
      case Opcode::Halt:
        need_dest(false);
        break;
    }
    if (!done()) {
      fail(ErrorCode::ParseError, line_, fmt::format("unexpected '{}' after instruction", peek()->text));
    }
    return ins;
  }

 private:
  void decode_mnemonic(const std::string& m, Instruction& ins) {
    for (const auto& info : kOpcodes) {
      if (info.name == m && info.op != Opcode::Store && info.op != Opcode::Load) {
        ins.op = info.op;
        return;
      }
    }
    for (std::string_view prefix : {"store", "load"}) {
      if (m.size() == prefix.size() + 1 && m.compare(0, prefix.size(), prefix) == 0) {
        const char w = m.back();
        if (w == '1' || w == '2' || w == '4' || w == '8') {
          ins.op = prefix == "store" ? Opcode::Store : Opcode::Load;
          ins.width = static_cast<std::uint32_t>(w - '0');
          return;
        }
        fail(ErrorCode::ParseError, line_, fmt::format("access width in '{}' must be 1, 2, 4 or 8", m));
      }
    }
    fail(ErrorCode::ParseError, line_, fmt::format("unknown opcode '{}'", m));
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int line_;
  Function& fn_;
};

std::vector<RegId> parse_params(LineParser& p) {
  std::vector<RegId> params;
  if (!p.peek_punct('(')) return params;
  p.expect_punct('(');
  if (p.peek_punct(')')) {
    p.expect_punct(')');
    return params;
  }
  while (true) {
    params.push_back(p.reg());
    if (p.peek_punct(')')) break;
    p.expect_punct(',');
  }
  p.expect_punct(')');
  return params;
}

void link_and_validate(Program& prog) {
  for (Function& fn : prog.functions) {
    for (Instruction& ins : fn.body) {
      ins.target_index.clear();
      for (const std::string& target : ins.targets) {
        auto idx = fn.find_label(target);
        if (!idx) {
          fail(ErrorCode::LinkError, ins.line,
               fmt::format("label '{}' is not defined in function '{}'", target, fn.name));
        }
        ins.target_index.push_back(*idx);
      }
      if (ins.op == Opcode::Call) {
        auto callee = prog.find_function(ins.callee);
        if (!callee) {
          fail(ErrorCode::LinkError, ins.line, fmt::format("call to undefined function '{}'", ins.callee));
        }
        if (*callee == prog.main_index) {
          fail(ErrorCode::ValidationError, ins.line, "main may not be called");
        }
        if (prog.functions[*callee].params.size() != ins.args.size()) {
          fail(ErrorCode::LinkError, ins.line,
               fmt::format("'{}' takes {} arguments, {} given", ins.callee,
                           prog.functions[*callee].params.size(), ins.args.size()));
        }
        ins.callee_index = *callee;
      }
    }
  }
  for (const Function& fn : prog.functions) {
    if (!fn.body.back().is_terminator()) {
      fail(ErrorCode::ValidationError, fn.body.back().line,
           fmt::format("function '{}' falls off its end", fn.name));
    }
    const Cfg cfg = build_cfg(fn);
    const auto stuck = nodes_not_reaching_exit(cfg);
    if (!stuck.empty()) {
      const Instruction& ins = fn.body[stuck.front()];
      fail(ErrorCode::ValidationError, ins.line,
           fmt::format("'{}:{}' cannot reach a return", fn.name, ins.label));
    }
  }
}

std::string escape_bytes(const std::vector<std::uint8_t>& bytes) {
  std::string out = "\"";
  for (std::uint8_t b : bytes) {
    if (b == '"' || b == '\\') {
      out += '\\';
      out += static_cast<char>(b);
    } else if (b >= 0x20 && b < 0x7f && b != '#') {
      out += static_cast<char>(b);
    } else {
      out += fmt::format("\\x{:02x}", b);
    }
  }
  out += '"';
  return out;
}

}  // namespace

std::string_view opcode_name(Opcode op) noexcept {
  for (const auto& info : kOpcodes) {
    if (info.op == op) return info.name;
  }
  return "?";
}

bool is_arith(Opcode op) noexcept {
  switch (op) {
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::CmpLe:
    case Opcode::CmpLt:
    case Opcode::CmpEq:
      return true;
    default:
      return false;
  }
}

std::optional<std::uint32_t> Function::find_label(std::string_view label) const {
  auto it = labels.find(std::string(label));
  if (it == labels.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint32_t> Program::find_function(std::string_view name) const {
  for (std::uint32_t i = 0; i < functions.size(); ++i) {
    if (functions[i].name == name) return i;
  }
  return std::nullopt;
}

std::string Program::site_name(InstrRef ref) const {
  return functions[ref.fn].name + ":" + functions[ref.fn].body[ref.index].label;
}

std::optional<InstrRef> Program::resolve_site(std::string_view site) const {
  std::string_view fn_name = main().name;
  std::string_view label = site;
  if (auto colon = site.find(':'); colon != std::string_view::npos) {
    fn_name = site.substr(0, colon);
    label = site.substr(colon + 1);
  }
  auto fn = find_function(fn_name);
  if (!fn) return std::nullopt;
  auto idx = functions[*fn].find_label(label);
  if (!idx) return std::nullopt;
  return InstrRef{*fn, *idx};
}

Program parse_program(std::string_view text) {
  Program prog;
  Function* current = nullptr;
  int lineno = 0;
  int last_line = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    auto toks = lex_line(raw, lineno);
    if (toks.empty()) continue;
    last_line = lineno;

    if (current == nullptr) {
      if (toks[0].kind != Token::Kind::Ident || toks[0].text != "fn") {
        fail(ErrorCode::ParseError, lineno, "expected 'fn <name> {'");
      }
      prog.functions.emplace_back();
      current = &prog.functions.back();
      LineParser p(std::move(toks), lineno, *current);
      p.ident("fn");
      current->name = p.ident("function name");
      if (!is_plain_ident(current->name)) {
        fail(ErrorCode::ParseError, lineno, fmt::format("bad function name '{}'", current->name));
      }
      for (std::size_t f = 0; f + 1 < prog.functions.size(); ++f) {
        if (prog.functions[f].name == current->name) {
          fail(ErrorCode::ValidationError, lineno,
               fmt::format("function '{}' defined twice", current->name));
        }
      }
      current->params = parse_params(p);
      std::set<RegId> unique(current->params.begin(), current->params.end());
      if (unique.size() != current->params.size()) {
        fail(ErrorCode::ParseError, lineno, "duplicate parameter register");
      }
      p.expect_punct('{');
      if (!p.done()) fail(ErrorCode::ParseError, lineno, "expected end of line after '{'");
      continue;
    }

    if (toks.size() == 1 && toks[0].kind == Token::Kind::Punct && toks[0].text == "}") {
      if (current->body.empty()) {
        fail(ErrorCode::ValidationError, lineno, fmt::format("function '{}' is empty", current->name));
      }
      current = nullptr;
      continue;
    }

    LineParser p(std::move(toks), lineno, *current);
    Instruction ins = p.instruction();
    const auto index = static_cast<std::uint32_t>(current->body.size());
    if (!current->labels.emplace(ins.label, index).second) {
      fail(ErrorCode::ValidationError, lineno,
           fmt::format("label '{}' repeated in function '{}'", ins.label, current->name));
    }
    current->body.push_back(std::move(ins));
  }
  if (current != nullptr) {
    fail(ErrorCode::ParseError, last_line, fmt::format("function '{}' is missing '}}'", current->name));
  }
  if (prog.functions.empty()) fail(ErrorCode::ParseError, lineno, "program has no functions");
  auto main_idx = prog.find_function("main");
  if (!main_idx) fail(ErrorCode::LinkError, lineno, "program has no 'main' function");
  prog.main_index = *main_idx;
  if (!prog.main().params.empty()) {
    fail(ErrorCode::ValidationError, prog.main().body.front().line, "main takes no parameters");
  }
  link_and_validate(prog);
  return prog;
}

std::string serialize_program(const Program& program) {
  std::string out;
  auto reg = [](const Function& fn, RegId r) { return fn.reg_names[r]; };
  auto opnd = [&](const Function& fn, const Operand& o) {
    return o.is_reg() ? reg(fn, o.reg) : std::to_string(o.imm);
  };
  for (const Function& fn : program.functions) {
    out += "fn " + fn.name;
    if (!fn.params.empty()) {
      out += "(";
      for (std::size_t i = 0; i < fn.params.size(); ++i) {
        if (i) out += ", ";
        out += reg(fn, fn.params[i]);
      }
      out += ")";
    }
    out += " {\n";
    for (const Instruction& ins : fn.body) {
      out += "  " + ins.label + ": ";
      if (ins.dest) out += reg(fn, *ins.dest) + " = ";
      switch (ins.op) {
        case Opcode::Store:
          out += fmt::format("store{}", ins.width);
          break;
        case Opcode::Load:
          out += fmt::format("load{}", ins.width);
          break;
        default:
          out += opcode_name(ins.op);
      }
      if (ins.op == Opcode::Call) out += " " + ins.callee;
      if (ins.op == Opcode::StoreBytes) {
        out += " " + opnd(fn, ins.args[0]) + " " + escape_bytes(ins.bytes);
      } else {
        for (const Operand& o : ins.args) out += " " + opnd(fn, o);
      }
      for (const std::string& t : ins.targets) out += " " + t;
      if (ins.op == Opcode::ToggleSensitive) out += ins.toggle_on ? " on" : " off";
      if (ins.type_ann) out += " type=" + *ins.type_ann;
      if (ins.prov) out += " field=" + ins.prov->type + "." + ins.prov->field;
      out += "\n";
    }
    out += "}\n";
  }
  return out;
}

}  // namespace heapguard
