#include "gflow/template.hpp"

#include <cctype>

namespace gflow {

namespace {

bool valid_placeholder_name(std::string_view name) {
  auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  if (name.empty()) return false;
  const auto dot = name.find('.');
  std::string_view head = name.substr(0, dot);
  if (head.empty() || std::isdigit(static_cast<unsigned char>(head.front()))) return false;
  for (char c : head) {
    if (!ident_char(c)) return false;
  }
  if (dot == std::string_view::npos) return true;
  std::string_view key = name.substr(dot + 1);
  if (key.empty()) return false;
  for (char c : key) {
    if (!ident_char(c) && c != '-') return false;
  }
  return true;
}

}  // namespace

std::vector<TemplatePart> parse_template(std::string_view text) {
  std::vector<TemplatePart> parts;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        literal += '{';
        i += 2;
        continue;
      }
      const auto close = text.find('}', i + 1);
      if (close == std::string_view::npos) throw TemplateSyntaxError{i, "unterminated placeholder"};
      std::string_view name = text.substr(i + 1, close - i - 1);
      if (!valid_placeholder_name(name)) {
        throw TemplateSyntaxError{i, "invalid placeholder '{" + std::string(name) + "}'"};
      }
      if (!literal.empty()) parts.push_back({false, std::move(literal)});
      literal.clear();
      parts.push_back({true, std::string(name)});
      i = close + 1;
    } else if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        literal += '}';
        i += 2;
        continue;
      }
      throw TemplateSyntaxError{i, "unmatched '}' (write '}}' for a literal brace)"};
    } else {
      literal += c;
      ++i;
    }
  }
  if (!literal.empty()) parts.push_back({false, std::move(literal)});
  return parts;
}

std::vector<std::string> template_placeholders(std::string_view text) {
  std::vector<std::string> names;
  for (auto& part : parse_template(text)) {
    if (part.placeholder) names.push_back(std::move(part.text));
  }
  return names;
}

std::optional<std::string> render_template(std::string_view text, const PlaceholderLookup& lookup,
                                           std::string* missing) {
  std::string out;
  for (const auto& part : parse_template(text)) {
    if (!part.placeholder) {
      out += part.text;
      continue;
    }
    auto value = lookup(part.text);
    if (!value) {
      if (missing) *missing = part.text;
      return std::nullopt;
    }
    out += *value;
  }
  return out;
}

}  // namespace gflow

namespace gflow {

std::string shell_quote(std::string_view text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  out += "'";
  return out;
}

}  // namespace gflow
