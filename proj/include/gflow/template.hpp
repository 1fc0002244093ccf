#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gflow {

// One piece of a command or path template: literal text or a `{name}` reference.
struct TemplatePart {
  bool placeholder = false;
  std::string text;
};

// Thrown by parse_template; `offset` is the byte offset of the offending brace.
struct TemplateSyntaxError {
  std::size_t offset;
  std::string message;
};

// `{{` and `}}` are literal braces. Placeholder names are `ident` or `ident.key`.
std::vector<TemplatePart> parse_template(std::string_view text);

// Names referenced by a template, in order of appearance.
std::vector<std::string> template_placeholders(std::string_view text);

using PlaceholderLookup = std::function<std::optional<std::string>(const std::string& name)>;

// Substitutes every placeholder; returns the name of the first unresolved one through `missing`.
std::optional<std::string> render_template(std::string_view text, const PlaceholderLookup& lookup,
                                           std::string* missing = nullptr);

}  // namespace gflow

namespace gflow {

// POSIX single-quote quoting, safe to splice into `sh -c` text.
std::string shell_quote(std::string_view text);

}  // namespace gflow
