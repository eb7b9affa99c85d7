#include "heapguard/typedb.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "heapguard/error.hpp"

namespace heapguard {

namespace {

class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (c == '\n') ++line_;
        ++pos_;
      } else {
        break;
      }
    }
  }
  bool at_end() {
    skip_space();
    return pos_ >= text_.size();
  }
  bool peek(char c) {
    skip_space();
    return pos_ < text_.size() && text_[pos_] == c;
  }
  void expect(char c) {
    if (!peek(c)) fail(fmt::format("expected '{}'", c));
    ++pos_;
  }
  std::string word() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '_' || text_[pos_] == ':')) {
      ++pos_;
    }
    if (start == pos_) fail("expected an identifier");
    return std::string(text_.substr(start, pos_ - start));
  }
  std::string ident() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_) fail("expected an identifier");
    return std::string(text_.substr(start, pos_ - start));
  }
  std::uint64_t number() {
    skip_space();
    std::size_t start = pos_;
    int base = 10;
    if (text_.substr(pos_, 2) == "0x" || text_.substr(pos_, 2) == "0X") {
      base = 16;
      pos_ += 2;
      start = pos_;
    }
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value, base);
    if (ec != std::errc{} || ptr == text_.data() + start) fail("expected an unsigned integer");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return value;
  }
  [[noreturn]] void fail(const std::string& msg, ErrorCode code = ErrorCode::ParseError) const {
    throw Error(code, fmt::format("typedb line {}: {}", line_, msg));
  }
  int line() const { return line_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace

const FieldDef* TypeDef::field(std::string_view name) const {
  for (const FieldDef& f : fields) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const TypeDef* TypeDb::find(std::string_view name) const {
  auto it = types_.find(name);
  return it == types_.end() ? nullptr : &it->second;
}

void TypeDb::add_type(TypeDef def) {
  if (types_.count(def.name) != 0) {
    throw Error(ErrorCode::DuplicateType, fmt::format("type '{}' declared twice", def.name));
  }
  std::stable_sort(def.fields.begin(), def.fields.end(),
                   [](const FieldDef& a, const FieldDef& b) { return a.offset < b.offset; });
  for (std::size_t i = 0; i < def.fields.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (def.fields[j].name == def.fields[i].name) {
        throw Error(ErrorCode::OverlappingFields,
                    fmt::format("field '{}.{}' declared twice", def.name, def.fields[i].name));
      }
    }
    if (i > 0 && def.fields[i].offset < def.fields[i - 1].end()) {
      throw Error(ErrorCode::OverlappingFields,
                  fmt::format("fields '{}.{}' and '{}.{}' overlap", def.name,
                              def.fields[i - 1].name, def.name, def.fields[i].name));
    }
  }
  std::string name = def.name;
  types_.emplace(std::move(name), std::move(def));
}

void TypeDb::add_binding(std::string site, std::string type) {
  if (find(type) == nullptr) {
    throw Error(ErrorCode::UnknownTypeInBinding,
                fmt::format("binding '{}' names undeclared type '{}'", site, type));
  }
  bindings_.emplace_back(std::move(site), std::move(type));
}

TypeDb parse_typedb(std::string_view text) {
  Scanner sc(text);
  TypeDb db;
  // Bindings may precede the types they name, so resolve them at the end.
  std::vector<std::pair<std::string, std::string>> pending;
  while (!sc.at_end()) {
    const std::string keyword = sc.ident();
    if (keyword == "type") {
      TypeDef def;
      def.name = sc.ident();
      sc.expect('{');
      std::uint64_t cursor = 0;
      while (!sc.peek('}')) {
        FieldDef f;
        f.name = sc.ident();
        sc.expect(':');
        f.size = sc.number();
        if (f.size == 0) sc.fail(fmt::format("field '{}' has zero size", f.name));
        f.offset = cursor;
        if (sc.peek('@')) {
          sc.expect('@');
          f.offset = sc.number();
        }
        sc.expect(';');
        cursor = f.offset + f.size;
        def.fields.push_back(std::move(f));
      }
      sc.expect('}');
      db.add_type(std::move(def));
    } else if (keyword == "bind") {
      std::string site = sc.word();
      std::string type = sc.ident();
      if (sc.peek(';')) sc.expect(';');
      pending.emplace_back(std::move(site), std::move(type));
    } else {
      sc.fail(fmt::format("unknown declaration '{}'", keyword));
    }
  }
  for (auto& [site, type] : pending) db.add_binding(std::move(site), std::move(type));
  return db;
}

const FieldDef* field_at(const TypeDef& type, std::uint64_t offset) {
  for (const FieldDef& f : type.fields) {
    if (offset >= f.offset && offset < f.end()) return &f;
  }
  return nullptr;
}

bool crosses_field(const TypeDef& type, std::string_view field, std::uint64_t write_offset,
                   std::uint64_t write_len) {
  const FieldDef* f = type.field(field);
  if (f == nullptr) {
    throw Error(ErrorCode::UnknownField,
                fmt::format("type '{}' has no field '{}'", type.name, field));
  }
  return write_offset < f->offset || write_offset + write_len > f->end();
}

SiteTypes resolve_site_types(const Program& program, const TypeDb* db) {
  SiteTypes out(program.functions.size());
  for (std::size_t f = 0; f < program.functions.size(); ++f) {
    const Function& fn = program.functions[f];
    out[f].assign(fn.body.size(), {});
    for (std::size_t i = 0; i < fn.body.size(); ++i) {
      const Instruction& ins = fn.body[i];
      if (ins.type_ann) {
        if (db == nullptr || db->find(*ins.type_ann) == nullptr) {
          throw Error(ErrorCode::UnknownTypeInBinding,
                      fmt::format("{}:{} binds unknown type '{}'", fn.name, ins.label, *ins.type_ann));
        }
        out[f][i] = *ins.type_ann;
      }
      if (ins.prov) {
        const TypeDef* t = db ? db->find(ins.prov->type) : nullptr;
        if (t == nullptr) {
          throw Error(ErrorCode::UnknownTypeInBinding,
                      fmt::format("{}:{} refers to unknown type '{}'", fn.name, ins.label, ins.prov->type));
        }
        if (t->field(ins.prov->field) == nullptr) {
          throw Error(ErrorCode::UnknownField, fmt::format("{}:{} refers to unknown field '{}.{}'",
                                                           fn.name, ins.label, ins.prov->type,
                                                           ins.prov->field));
        }
      }
    }
  }
  if (db == nullptr) return out;
  for (const auto& [site, type] : db->bindings()) {
    auto ref = program.resolve_site(site);
    if (!ref) {
      throw Error(ErrorCode::ValidationError,
                  fmt::format("binding names unknown allocation site '{}'", site));
    }
    const Opcode op = program.at(*ref).op;
    if (op != Opcode::Alloc && op != Opcode::Calloc && op != Opcode::Realloc) {
      throw Error(ErrorCode::ValidationError,
                  fmt::format("binding site '{}' is not an allocation", site));
    }
    std::string& slot = out[ref->fn][ref->index];
    if (!slot.empty() && slot != type) {
      throw Error(ErrorCode::ValidationError,
                  fmt::format("site '{}' bound to both '{}' and '{}'", site, slot, type));
    }
    slot = type;
  }
  return out;
}

}  // namespace heapguard
