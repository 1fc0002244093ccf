#include <gtest/gtest.h>

#include <map>

#include "gflow/template.hpp"

namespace gflow {
namespace {

PlaceholderLookup from(std::map<std::string, std::string> values) {
  return [values](const std::string& name) -> std::optional<std::string> {
    auto it = values.find(name);
    if (it == values.end()) return std::nullopt;
    return it->second;
  };
}

TEST(Template, SplitsLiteralsAndPlaceholders) {
  const auto parts = parse_template("bwa {input} > {output}");
  ASSERT_EQ(parts.size(), 4u);
  EXPECT_TRUE(parts[1].placeholder);
  EXPECT_EQ(parts[1].text, "input");
  EXPECT_EQ(parts[2].text, " > ");
}

TEST(Template, DoubledBracesAreLiteral) {
  EXPECT_EQ(render_template("awk '{{print $1}}' {x}", from({{"x", "f"}})), "awk '{print $1}' f");
}

TEST(Template, DottedNames) {
  EXPECT_EQ(template_placeholders("{params.ref} {sampleID} {config.k}"),
            (std::vector<std::string>{"params.ref", "sampleID", "config.k"}));
}

TEST(Template, ReportsFirstMissing) {
  std::string missing;
  EXPECT_FALSE(render_template("{a} {b} {c}", from({{"a", "1"}}), &missing));
  EXPECT_EQ(missing, "b");
}

TEST(Template, SyntaxErrors) {
  EXPECT_THROW(parse_template("{unclosed"), TemplateSyntaxError);
  EXPECT_THROW(parse_template("stray }"), TemplateSyntaxError);
  EXPECT_THROW(parse_template("{}"), TemplateSyntaxError);
  EXPECT_THROW(parse_template("{bad name}"), TemplateSyntaxError);
}

TEST(ShellQuote, SurvivesTheShell) {
  EXPECT_EQ(shell_quote("plain"), "'plain'");
  EXPECT_EQ(shell_quote("it's"), "'it'\\''s'");
}

}  // namespace
}  // namespace gflow
