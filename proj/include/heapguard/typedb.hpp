#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "heapguard/program.hpp"

namespace heapguard {

struct FieldDef {
  std::string name;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;

  std::uint64_t end() const { return offset + size; }
  friend bool operator==(const FieldDef&, const FieldDef&) = default;
};

struct TypeDef {
  std::string name;
  std::vector<FieldDef> fields;  // sorted by offset, non-overlapping

  const FieldDef* field(std::string_view name) const;
  std::uint64_t extent() const { return fields.empty() ? 0 : fields.back().end(); }
};

/// Struct layouts plus allocation-site bindings, read from text:
///
///   type goaty { name:8; should_run_calc:4; }
///   type padded { tag:1; value:8 @8; }
///   bind main:L0 goaty
class TypeDb {
 public:
  const TypeDef* find(std::string_view name) const;
  const std::map<std::string, TypeDef, std::less<>>& types() const { return types_; }
  /// Site text exactly as written ("main:L0" or "L0").
  const std::vector<std::pair<std::string, std::string>>& bindings() const { return bindings_; }

  void add_type(TypeDef def);
  void add_binding(std::string site, std::string type);

 private:
  std::map<std::string, TypeDef, std::less<>> types_;
  std::vector<std::pair<std::string, std::string>> bindings_;
};

/// Throws Error with ParseError, DuplicateType, OverlappingFields or
/// UnknownTypeInBinding.
TypeDb parse_typedb(std::string_view text);

/// The field whose extent contains `offset`, or nullptr for padding.
const FieldDef* field_at(const TypeDef& type, std::uint64_t offset);

/// True iff [write_offset, write_offset + write_len) leaves the field's
/// extent. Throws Error(UnknownField) if the field is not part of the type.
bool crosses_field(const TypeDef& type, std::string_view field, std::uint64_t write_offset,
                   std::uint64_t write_len);

/// Type bound to each allocation instruction, from `type=` annotations and
/// `bind` lines. Indexed [fn][instr]; empty string means unbound.
using SiteTypes = std::vector<std::vector<std::string>>;

/// Resolves bindings against a program and checks every `type=` / `field=`
/// annotation names a known type and field. Throws Error(ValidationError)
/// for unknown sites, conflicting bindings or non-allocation sites, and
/// Error(UnknownTypeInBinding) / Error(UnknownField) for dangling names.
SiteTypes resolve_site_types(const Program& program, const TypeDb* db);

}  // namespace heapguard
