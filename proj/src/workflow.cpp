#include "gflow/workflow.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

#include "gflow/error.hpp"
#include "gflow/template.hpp"

namespace gflow {

namespace {

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { Ident, Int, String, Colon, Comma, LBracket, RBracket, Equals, Newline, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
  // Indentation width of the line this token starts, when it is the first token on it.
  int indent = -1;
  // String tokens written with triple quotes.
  bool triple = false;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    int depth = 0;
    bool line_start = true;
    int indent = 0;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (line_start) {
        indent = 0;
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) {
          indent += src_[pos_] == '\t' ? 4 : 1;
          advance();
        }
        line_start = false;
        continue;
      }
      if (c == '\r') {
        advance();
        continue;
      }
      if (c == '\n') {
        if (depth == 0 && !out.empty() && out.back().kind != Tok::Newline) {
          out.push_back({Tok::Newline, "", line_, column_});
        }
        advance();
        if (depth == 0) line_start = true;
        continue;
      }
      if (c == ' ' || c == '\t') {
        advance();
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        continue;
      }

      const bool first_on_line = depth == 0 && (out.empty() || out.back().kind == Tok::Newline);
      Token tok{Tok::End, "", line_, column_};
      if (first_on_line) tok.indent = indent;

      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::string word;
        while (pos_ < src_.size()) {
          char d = src_[pos_];
          if (std::isalnum(static_cast<unsigned char>(d)) || d == '_' || d == '-' || d == '.') {
            word += d;
            advance();
          } else {
            break;
          }
        }
        tok.kind = Tok::Ident;
        tok.text = std::move(word);
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        std::string digits;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          digits += src_[pos_];
          advance();
        }
        if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) {
          throw SyntaxError(tok.line, tok.column, "malformed number");
        }
        tok.kind = Tok::Int;
        tok.text = std::move(digits);
      } else if (c == '"') {
        tok.kind = Tok::String;
        if (src_.substr(pos_, 3) == "\"\"\"") {
          tok.triple = true;
          tok.text = read_triple(tok);
        } else {
          tok.text = read_string(tok);
        }
      } else {
        switch (c) {
          case ':': tok.kind = Tok::Colon; break;
          case ',': tok.kind = Tok::Comma; break;
          case '=': tok.kind = Tok::Equals; break;
          case '[':
            tok.kind = Tok::LBracket;
            ++depth;
            break;
          case ']':
            tok.kind = Tok::RBracket;
            if (depth == 0) throw SyntaxError(line_, column_, "unmatched ']'");
            --depth;
            break;
          default:
            throw SyntaxError(line_, column_, std::string("unexpected character '") + c + "'");
        }
        tok.text = std::string(1, c);
        advance();
      }
      out.push_back(std::move(tok));
    }
    if (depth != 0) throw SyntaxError(line_, column_, "unterminated '[' list");
    if (!out.empty() && out.back().kind != Tok::Newline) out.push_back({Tok::Newline, "", line_, column_});
    out.push_back({Tok::End, "", line_, column_});
    return out;
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  std::string read_string(const Token& tok) {
    advance();  // opening quote
    std::string value;
    while (true) {
      if (pos_ >= src_.size() || src_[pos_] == '\n') throw SyntaxError(tok.line, tok.column, "unterminated string");
      char c = src_[pos_];
      if (c == '"') {
        advance();
        return value;
      }
      if (c == '\\' && pos_ + 1 < src_.size()) {
        char n = src_[pos_ + 1];
        switch (n) {
          case '"': value += '"'; break;
          case '\\': value += '\\'; break;
          case 'n': value += '\n'; break;
          case 't': value += '\t'; break;
          default:
            // Unknown escapes stay literal so shell snippets like "\." survive.
            value += '\\';
            value += n;
        }
        advance();
        advance();
        continue;
      }
      value += c;
      advance();
    }
  }

  std::string read_triple(const Token& tok) {
    advance();
    advance();
    advance();
    std::string value;
    while (true) {
      if (pos_ >= src_.size()) throw SyntaxError(tok.line, tok.column, "unterminated triple-quoted string");
      if (src_.substr(pos_, 3) == "\"\"\"") {
        advance();
        advance();
        advance();
        return value;
      }
      value += src_[pos_];
      advance();
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

// ---------------------------------------------------------------------------
// Parser

struct Item {
  std::optional<std::string> key;
  Token value;
};

struct Value {
  Token head;  // first token of the value
  bool is_list = false;
  std::vector<Item> items;
};

const std::set<std::string, std::less<>> kRuleKeys = {"input", "output", "params", "resources",
                                                      "shell", "script", "metawrapper"};
const std::set<std::string, std::less<>> kTopLevelKeys = {"workdir", "configfile", "config", "image",
                                                          "referencefile", "testsamplesize"};

class Parser {
 public:
  Parser(std::vector<Token> tokens, std::string name) : toks_(std::move(tokens)) { wf_.name = std::move(name); }

  Workflow run() {
    std::set<std::string> directives_seen;
    while (peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        next();
        continue;
      }
      const Token& head = peek();
      if (head.indent > 0) throw SyntaxError(head.line, head.column, "unexpected indentation");
      if (head.kind != Tok::Ident) throw SyntaxError(head.line, head.column, "expected a rule or a directive");

      if (head.text == "rule") {
        parse_rule();
        continue;
      }

      Token key = next();
      if (kRuleKeys.count(key.text)) {
        throw Error(Errc::UnknownKeyword, "line " + std::to_string(key.line) + ": '" + key.text +
                                              "' is only valid inside a rule");
      }
      if (!kTopLevelKeys.count(key.text)) {
        throw Error(Errc::UnknownKeyword, "line " + std::to_string(key.line) + ": unknown keyword '" + key.text + "'");
      }
      if (!directives_seen.insert(key.text).second) {
        throw SyntaxError(key.line, key.column, "directive '" + key.text + "' given more than once");
      }
      expect(Tok::Colon, "':' after '" + key.text + "'");
      Value value = parse_value();
      expect_line_end();
      bind_directive(key, value);
    }
    if (wf_.rules.empty()) throw SyntaxError(1, 1, "no rules defined");
    return std::move(wf_);
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  Token next() { return toks_[pos_++]; }

  Token expect(Tok kind, const std::string& what) {
    const Token& t = peek();
    if (t.kind != kind) throw SyntaxError(t.line, t.column, "expected " + what);
    return next();
  }

  void expect_line_end() {
    const Token& t = peek();
    if (t.kind != Tok::Newline && t.kind != Tok::End) {
      throw SyntaxError(t.line, t.column, "unexpected '" + t.text + "' at end of line");
    }
    if (t.kind == Tok::Newline) next();
  }

  Value parse_value() {
    Value v;
    v.head = peek();
    if (peek().kind == Tok::LBracket) {
      next();
      v.is_list = true;
      while (peek().kind != Tok::RBracket) {
        Item item;
        Token first = next();
        if (first.kind == Tok::Ident && peek().kind == Tok::Equals) {
          next();
          item.key = first.text;
          item.value = next();
        } else {
          item.value = first;
        }
        if (item.value.kind != Tok::String && item.value.kind != Tok::Int && item.value.kind != Tok::Ident) {
          throw SyntaxError(item.value.line, item.value.column, "expected a list item");
        }
        v.items.push_back(std::move(item));
        if (peek().kind == Tok::Comma) {
          next();
        } else if (peek().kind != Tok::RBracket) {
          throw SyntaxError(peek().line, peek().column, "expected ',' or ']' in list");
        }
      }
      next();
      return v;
    }
    Token t = next();
    if (t.kind != Tok::String && t.kind != Tok::Int && t.kind != Tok::Ident) {
      throw SyntaxError(t.line, t.column, "expected a value");
    }
    v.head = t;
    return v;
  }

  static void check_template(const Token& tok) {
    try {
      parse_template(tok.text);
    } catch (const TemplateSyntaxError& e) {
      int line = tok.line;
      int column = tok.column + 1 + static_cast<int>(e.offset);
      if (tok.triple) {
        // Walk the literal to place the error on its own line.
        column = tok.column + 3;
        for (std::size_t i = 0; i < e.offset && i < tok.text.size(); ++i) {
          if (tok.text[i] == '\n') {
            ++line;
            column = 1;
          } else {
            ++column;
          }
        }
      }
      throw SyntaxError(line, column, e.message);
    }
  }

  std::string string_value(const Value& v, const std::string& key) {
    if (v.is_list || v.head.kind != Tok::String) {
      throw SyntaxError(v.head.line, v.head.column, "'" + key + "' expects a quoted string");
    }
    return v.head.text;
  }

  std::vector<std::string> path_list(const Value& v, const std::string& key) {
    if (!v.is_list) {
      std::string s = string_value(v, key);
      check_template(v.head);
      return {s};
    }
    std::vector<std::string> out;
    for (const auto& item : v.items) {
      if (item.key || item.value.kind != Tok::String) {
        throw SyntaxError(item.value.line, item.value.column, "'" + key + "' expects a list of quoted paths");
      }
      check_template(item.value);
      out.push_back(item.value.text);
    }
    return out;
  }

  std::vector<std::pair<Token, Token>> keyed_items(const Value& v, const std::string& key) {
    if (!v.is_list) throw SyntaxError(v.head.line, v.head.column, "'" + key + "' expects a [key=value, ...] list");
    std::vector<std::pair<Token, Token>> out;
    std::set<std::string> seen;
    for (const auto& item : v.items) {
      if (!item.key) {
        throw SyntaxError(item.value.line, item.value.column, "'" + key + "' entries must be key=value");
      }
      if (!seen.insert(*item.key).second) {
        throw SyntaxError(item.value.line, item.value.column, "duplicate key '" + *item.key + "' in " + key);
      }
      Token key_tok = item.value;
      key_tok.text = *item.key;
      out.emplace_back(key_tok, item.value);
    }
    return out;
  }

  ResourceRequest parse_resources(const Value& v) {
    ResourceRequest req;
    for (const auto& [key, value] : keyed_items(v, "resources")) {
      if (key.text == "machine") {
        if (value.kind == Tok::Int) throw SyntaxError(value.line, value.column, "machine must be a name");
        req.machine = value.text;
      } else if (key.text == "disk_gb") {
        if (value.kind != Tok::Int) throw SyntaxError(value.line, value.column, "disk_gb must be an integer");
        if (value.text.size() > 9 || std::stoi(value.text) < kMinDiskGb) {
          throw SyntaxError(value.line, value.column,
                            "disk_gb must be between " + std::to_string(kMinDiskGb) + " and 999999999");
        }
        req.disk_gb = std::stoi(value.text);
      } else if (key.text == "disk_class") {
        auto cls = parse_disk_class(value.text);
        if (!cls || value.kind == Tok::Int) {
          throw SyntaxError(value.line, value.column, "disk_class must be one of standard, balanced, ssd");
        }
        req.disk_class = cls;
      } else {
        throw Error(Errc::UnknownKeyword,
                    "line " + std::to_string(key.line) + ": unknown resource '" + key.text + "'");
      }
    }
    return req;
  }

  void parse_rule() {
    Token kw = next();  // 'rule'
    const Token& name_tok = peek();
    if (name_tok.kind != Tok::Ident || name_tok.text.find('.') != std::string::npos) {
      throw SyntaxError(name_tok.line, name_tok.column, "expected a rule name after 'rule'");
    }
    Rule rule;
    rule.name = next().text;
    rule.line = kw.line;
    expect(Tok::Colon, "':' after rule name");
    expect_line_end();
    for (const auto& r : wf_.rules) {
      if (r.name == rule.name) {
        throw Error(Errc::DuplicateRule, "line " + std::to_string(kw.line) + ": rule '" + rule.name + "' already defined");
      }
    }

    std::set<std::string> seen;
    while (peek().kind == Tok::Ident && peek().indent > 0) {
      Token key = next();
      if (kTopLevelKeys.count(key.text)) {
        throw Error(Errc::UnknownKeyword, "line " + std::to_string(key.line) + ": '" + key.text +
                                              "' is a top-level directive, not a rule keyword");
      }
      if (!kRuleKeys.count(key.text)) {
        throw Error(Errc::UnknownKeyword, "line " + std::to_string(key.line) + ": unknown keyword '" + key.text + "'");
      }
      if (!seen.insert(key.text).second) {
        throw SyntaxError(key.line, key.column, "'" + key.text + "' given twice in rule '" + rule.name + "'");
      }
      expect(Tok::Colon, "':' after '" + key.text + "'");
      Value value = parse_value();
      expect_line_end();

      if (key.text == "input") {
        rule.input = path_list(value, key.text);
      } else if (key.text == "output") {
        rule.output = path_list(value, key.text);
      } else if (key.text == "params") {
        for (const auto& [k, val] : keyed_items(value, "params")) {
          check_template(val);
          rule.params.push_back({k.text, val.text});
        }
      } else if (key.text == "resources") {
        rule.resources = parse_resources(value);
      } else if (key.text == "shell") {
        rule.shell = string_value(value, key.text);
        check_template(value.head);
      } else if (key.text == "script") {
        rule.script = string_value(value, key.text);
        check_template(value.head);
      } else if (key.text == "metawrapper") {
        rule.metawrapper = string_value(value, key.text);
      }
    }
    if (peek().kind != Tok::End && peek().kind != Tok::Newline && peek().indent > 0) {
      throw SyntaxError(peek().line, peek().column, "expected 'key: value' inside rule '" + rule.name + "'");
    }

    if (rule.shell && rule.script) {
      throw Error(Errc::BothCommands, "rule '" + rule.name + "' (line " + std::to_string(rule.line) +
                                          ") has both shell and script");
    }
    if (!rule.shell && !rule.script) {
      throw Error(Errc::MissingCommand, "rule '" + rule.name + "' (line " + std::to_string(rule.line) +
                                            ") needs a shell or script entry");
    }
    wf_.rules.push_back(std::move(rule));
  }

  void bind_directive(const Token& key, const Value& value) {
    if (key.text == "testsamplesize") {
      if (value.is_list || value.head.kind != Tok::Int) {
        throw SyntaxError(value.head.line, value.head.column, "testsamplesize expects an integer");
      }
      if (value.head.text.size() > 9 || std::stoi(value.head.text) < 1) {
        throw SyntaxError(value.head.line, value.head.column, "testsamplesize must be at least 1");
      }
      wf_.testsamplesize = std::stoi(value.head.text);
      return;
    }
    if (key.text == "config") {
      std::string text;
      if (value.is_list) {
        for (const auto& [k, v] : keyed_items(value, "config")) {
          if (!text.empty()) text += ", ";
          text += k.text + "=" + v.text;
        }
      } else {
        text = string_value(value, key.text);
      }
      try {
        wf_.config_values = parse_config_pairs(text);
      } catch (const SyntaxError& e) {
        throw SyntaxError(value.head.line, value.head.column, e.detail());
      }
      wf_.config = text;
      return;
    }
    std::string text = string_value(value, key.text);
    if (key.text == "workdir") {
      wf_.workdir = text;
    } else if (key.text == "configfile") {
      wf_.configfile = text;
    } else if (key.text == "image") {
      wf_.image = text;
    } else if (key.text == "referencefile") {
      wf_.referencefile = text;
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  Workflow wf_;
};

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  out += "\"";
  return out;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Placeholder resolution shared by validation and compilation

enum class TemplateContext { Path, Command };

struct Bindings {
  std::string sample_id;
  std::string workdir;
  std::string reference;
  const Rule* rule = nullptr;
  const Workflow* workflow = nullptr;
  std::map<std::string, std::string> params;  // resolved
  std::string input;
  std::string output;
};

std::optional<std::string> lookup(const Bindings& b, const std::string& name, TemplateContext ctx) {
  if (name == "sampleID") return b.sample_id;
  if (name == "workdir") return b.workdir;
  if (name == "reference") return b.reference;
  if (ctx == TemplateContext::Command) {
    if (name == "input") return b.input;
    if (name == "output") return b.output;
  }
  if (name.rfind("params.", 0) == 0) {
    auto it = b.params.find(name.substr(7));
    if (it != b.params.end()) return it->second;
    return std::nullopt;
  }
  if (name.rfind("config.", 0) == 0) {
    auto it = b.workflow->config_values.find(name.substr(7));
    if (it != b.workflow->config_values.end()) return it->second;
    return std::nullopt;
  }
  return std::nullopt;
}

// Resolves a rule's params; their values may use every path placeholder except other params.
std::map<std::string, std::string> resolve_params(const Bindings& base, const Rule& rule, std::string* missing) {
  std::map<std::string, std::string> out;
  out["sampleID"] = base.sample_id;
  Bindings no_params = base;
  no_params.params.clear();
  for (const auto& p : rule.params) {
    auto v = render_template(p.value, [&](const std::string& n) { return lookup(no_params, n, TemplateContext::Path); },
                             missing);
    if (!v) return {};
    out[p.key] = *v;
  }
  return out;
}

std::string interpreter_for(std::string_view script) {
  auto ends_with = [&](std::string_view suffix) {
    return script.size() >= suffix.size() && script.substr(script.size() - suffix.size()) == suffix;
  };
  if (ends_with(".py")) return "python3";
  if (ends_with(".R") || ends_with(".r")) return "Rscript";
  if (ends_with(".sh")) return "sh";
  return "";
}

struct ResolvedRule {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string command;
  std::map<std::string, std::string> params;
};

// Throws InvalidArgument naming the first undeclared placeholder.
ResolvedRule resolve_rule(const Workflow& w, const Rule& rule, std::string_view sample_id, std::string_view reference) {
  Bindings b;
  b.sample_id = std::string(sample_id);
  b.workdir = w.workdir.value_or(".");
  b.reference = std::string(reference);
  b.rule = &rule;
  b.workflow = &w;

  std::string missing;
  auto fail = [&](const std::string& where) {
    throw Error(Errc::InvalidArgument,
                "rule '" + rule.name + "': undeclared placeholder {" + missing + "} in " + where);
  };

  b.params = resolve_params(b, rule, &missing);
  if (!missing.empty()) fail("params");

  ResolvedRule r;
  r.params = b.params;
  auto render_paths = [&](const std::vector<std::string>& patterns, const char* where) {
    std::vector<std::string> out;
    for (const auto& pattern : patterns) {
      auto v = render_template(pattern, [&](const std::string& n) { return lookup(b, n, TemplateContext::Path); },
                               &missing);
      if (!v) fail(where);
      out.push_back(*v);
    }
    return out;
  };
  r.inputs = render_paths(rule.input, "input");
  r.outputs = render_paths(rule.output, "output");
  b.input = join(r.inputs, " ");
  b.output = join(r.outputs, " ");

  if (rule.shell) {
    auto v = render_template(*rule.shell, [&](const std::string& n) { return lookup(b, n, TemplateContext::Command); },
                             &missing);
    if (!v) fail("shell");
    r.command = *v;
  } else if (rule.script) {
    auto v = render_template(*rule.script, [&](const std::string& n) { return lookup(b, n, TemplateContext::Path); },
                             &missing);
    if (!v) fail("script");
    const std::string interp = interpreter_for(*v);
    r.command = interp.empty() ? shell_quote(*v) : interp + " " + shell_quote(*v);
  }
  return r;
}

std::vector<std::string> undeclared_placeholders(const Workflow& w, const Rule& rule) {
  std::set<std::string> declared_params{"sampleID"};
  for (const auto& p : rule.params) declared_params.insert(p.key);

  std::vector<std::string> problems;
  auto check = [&](const std::string& text, TemplateContext ctx, bool allow_params, const std::string& where) {
    std::vector<std::string> names;
    try {
      names = template_placeholders(text);
    } catch (const TemplateSyntaxError& e) {
      problems.push_back(where + ": " + e.message);
      return;
    }
    for (const auto& n : names) {
      bool ok = n == "sampleID" || n == "workdir" || n == "reference";
      if (ctx == TemplateContext::Command && (n == "input" || n == "output")) ok = true;
      if (allow_params && n.rfind("params.", 0) == 0 && declared_params.count(n.substr(7))) ok = true;
      if (n.rfind("config.", 0) == 0 && w.config_values.count(n.substr(7))) ok = true;
      if (!ok) problems.push_back("undeclared placeholder {" + n + "} in " + where);
    }
  };
  for (const auto& p : rule.params) check(p.value, TemplateContext::Path, false, "params." + p.key);
  for (const auto& s : rule.input) check(s, TemplateContext::Path, true, "input");
  for (const auto& s : rule.output) check(s, TemplateContext::Path, true, "output");
  if (rule.shell) check(*rule.shell, TemplateContext::Command, true, "shell");
  if (rule.script) check(*rule.script, TemplateContext::Path, true, "script");
  return problems;
}

}  // namespace

// ---------------------------------------------------------------------------

bool Rule::operator==(const Rule& other) const {
  return name == other.name && input == other.input && output == other.output && params == other.params &&
         resources == other.resources && shell == other.shell && script == other.script &&
         metawrapper == other.metawrapper;
}

const Rule* Workflow::find_rule(std::string_view rule_name) const {
  for (const auto& r : rules) {
    if (r.name == rule_name) return &r;
  }
  return nullptr;
}

std::map<std::string, std::string> parse_config_pairs(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto comma = text.find(',', start);
    std::string_view piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    std::string item = trim(piece);
    if (!item.empty()) {
      auto eq = item.find('=');
      if (eq == std::string::npos || trim(item.substr(0, eq)).empty()) {
        throw SyntaxError(0, 0, "config entries must be key=value, got '" + item + "'");
      }
      out[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Workflow parse_workflow(std::string_view text, std::string name) {
  Lexer lexer(text);
  Parser parser(lexer.run(), std::move(name));
  return parser.run();
}

std::string serialize_workflow(const Workflow& w) {
  std::ostringstream out;
  if (w.image) out << "image : " << quote(*w.image) << "\n";
  if (w.workdir) out << "workdir : " << quote(*w.workdir) << "\n";
  if (w.configfile) out << "configfile : " << quote(*w.configfile) << "\n";
  if (w.config) out << "config : " << quote(*w.config) << "\n";
  if (w.referencefile) out << "referencefile : " << quote(*w.referencefile) << "\n";
  if (w.testsamplesize) out << "testsamplesize : " << *w.testsamplesize << "\n";
  for (const auto& rule : w.rules) {
    out << "\nrule " << rule.name << ":\n";
    auto list = [&](const char* key, const std::vector<std::string>& items) {
      out << "    " << key << ": [";
      for (std::size_t i = 0; i < items.size(); ++i) out << (i ? ", " : "") << quote(items[i]);
      out << "]\n";
    };
    if (!rule.input.empty()) list("input", rule.input);
    if (!rule.output.empty()) list("output", rule.output);
    if (!rule.params.empty()) {
      out << "    params: [";
      for (std::size_t i = 0; i < rule.params.size(); ++i) {
        out << (i ? ", " : "") << rule.params[i].key << "=" << quote(rule.params[i].value);
      }
      out << "]\n";
    }
    if (rule.resources) {
      std::vector<std::string> items;
      if (rule.resources->machine) items.push_back("machine=" + quote(*rule.resources->machine));
      if (rule.resources->disk_gb) items.push_back("disk_gb=" + std::to_string(*rule.resources->disk_gb));
      if (rule.resources->disk_class) {
        items.push_back("disk_class=" + quote(to_string(*rule.resources->disk_class)));
      }
      out << "    resources: [" << join(items, ", ") << "]\n";
    }
    if (rule.shell) out << "    shell: " << quote(*rule.shell) << "\n";
    if (rule.script) out << "    script: " << quote(*rule.script) << "\n";
    if (rule.metawrapper) out << "    metawrapper: " << quote(*rule.metawrapper) << "\n";
  }
  return out.str();
}

std::vector<Diagnostic> validate_workflow(const Workflow& w, const MachineCatalog& catalog) {
  std::vector<Diagnostic> diags;
  auto add = [&](const Rule* rule, std::string message) {
    diags.push_back({rule ? rule->name : "", rule ? rule->line : 0, std::move(message)});
  };

  if (w.rules.empty()) add(nullptr, "no rules defined");
  if (w.testsamplesize && *w.testsamplesize < 1) add(nullptr, "testsamplesize must be at least 1");

  std::set<std::string> names;
  for (const auto& rule : w.rules) {
    if (!names.insert(rule.name).second) add(&rule, "duplicate rule '" + rule.name + "'");
    if (rule.shell && rule.script) add(&rule, "has both shell and script");
    if (!rule.shell && !rule.script) add(&rule, "needs a shell or script entry");

    if (rule.resources) {
      if (rule.resources->machine) {
        const std::string& m = *rule.resources->machine;
        try {
          parse_machine_name(m);
          if (!catalog.find(m)) add(&rule, "machine '" + m + "' is not in the catalog");
        } catch (const Error& e) {
          switch (e.code()) {
            case Errc::UnsupportedSeries: add(&rule, "machine '" + m + "': unsupported series"); break;
            case Errc::UnknownFamily: add(&rule, "machine '" + m + "': unknown family"); break;
            default: add(&rule, "machine '" + m + "': malformed machine name"); break;
          }
        }
      }
      if (rule.resources->disk_gb && *rule.resources->disk_gb < kMinDiskGb) {
        add(&rule, "disk_gb must be at least " + std::to_string(kMinDiskGb));
      }
    }
    for (auto& problem : undeclared_placeholders(w, rule)) add(&rule, std::move(problem));
  }

  // Dependency graph on a probe sample; rules whose paths do not resolve were reported above.
  const std::size_t n = w.rules.size();
  std::vector<std::optional<ResolvedRule>> resolved(n);
  for (std::size_t i = 0; i < n; ++i) {
    try {
      resolved[i] = resolve_rule(w, w.rules[i], "SAMPLE", "reference");
    } catch (const Error&) {
    }
  }
  std::unordered_map<std::string, std::size_t> producer;
  for (std::size_t i = 0; i < n; ++i) {
    if (!resolved[i]) continue;
    for (const auto& out : resolved[i]->outputs) {
      auto [it, inserted] = producer.emplace(out, i);
      if (!inserted && it->second != i) {
        add(&w.rules[i], "output '" + out + "' is also produced by rule '" + w.rules[it->second].name + "'");
      }
    }
  }
  std::vector<std::set<std::size_t>> adj(n);
  for (std::size_t c = 0; c < n; ++c) {
    if (!resolved[c]) continue;
    for (const auto& in : resolved[c]->inputs) {
      auto it = producer.find(in);
      if (it != producer.end()) adj[it->second].insert(c);
    }
  }

  // Tarjan's strongly connected components.
  std::vector<int> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  int counter = 0;
  std::vector<std::vector<std::size_t>> cycles;
  std::function<void(std::size_t)> strongconnect = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t u : adj[v]) {
      if (index[u] < 0) {
        strongconnect(u);
        low[v] = std::min(low[v], low[u]);
      } else if (on_stack[u]) {
        low[v] = std::min(low[v], index[u]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> component;
      std::size_t u;
      do {
        u = stack.back();
        stack.pop_back();
        on_stack[u] = false;
        component.push_back(u);
      } while (u != v);
      if (component.size() > 1 || adj[v].count(v)) {
        std::sort(component.begin(), component.end());
        cycles.push_back(std::move(component));
      }
    }
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (index[v] < 0) strongconnect(v);
  }
  std::sort(cycles.begin(), cycles.end());
  for (const auto& cycle : cycles) {
    std::vector<std::string> members;
    for (auto i : cycle) members.push_back(w.rules[i].name);
    add(&w.rules[cycle.front()], "cycle involving " + join(members, ", "));
  }
  return diags;
}

bool is_external_path(std::string_view path) {
  if (!path.empty() && path.front() == '/') return true;
  auto scheme_end = path.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) return false;
  for (std::size_t i = 0; i < scheme_end; ++i) {
    const char c = path[i];
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.') return false;
  }
  return true;
}

std::size_t TaskPlan::step_index(std::string_view rule_name) const {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].rule_name == rule_name) return i;
  }
  throw Error(Errc::InvalidArgument, "plan has no step '" + std::string(rule_name) + "'");
}

std::vector<std::string> TaskPlan::sink_outputs() const {
  std::set<std::string> consumed;
  for (const auto& s : steps) consumed.insert(s.resolved_inputs.begin(), s.resolved_inputs.end());
  std::vector<std::string> out;
  for (const auto& s : steps) {
    for (const auto& o : s.resolved_outputs) {
      if (!consumed.count(o)) out.push_back(o);
    }
  }
  return out;
}

TaskPlan compile_task(const Workflow& w, std::string_view sample_id, const ResourceRequest& defaults,
                      std::string_view reference_root) {
  const std::size_t n = w.rules.size();
  std::vector<ResolvedRule> resolved;
  resolved.reserve(n);
  for (const auto& rule : w.rules) resolved.push_back(resolve_rule(w, rule, sample_id, reference_root));

  std::unordered_map<std::string, std::size_t> producer;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& out : resolved[i].outputs) {
      auto [it, inserted] = producer.emplace(out, i);
      if (!inserted && it->second != i) {
        throw Error(Errc::InvalidArgument, "output '" + out + "' produced by both '" + w.rules[it->second].name +
                                               "' and '" + w.rules[i].name + "'");
      }
    }
  }

  const std::string ref_prefix = std::string(reference_root) + "/";
  std::set<std::pair<std::size_t, std::size_t>> edge_set;
  for (std::size_t c = 0; c < n; ++c) {
    for (const auto& in : resolved[c].inputs) {
      auto it = producer.find(in);
      if (it != producer.end()) {
        if (it->second == c) {
          throw Error(Errc::CycleError, "rule '" + w.rules[c].name + "' consumes its own output '" + in + "'");
        }
        edge_set.emplace(it->second, c);
        continue;
      }
      if (is_external_path(in) || in == reference_root || in.rfind(ref_prefix, 0) == 0) continue;
      throw Error(Errc::UnresolvedInput, "rule '" + w.rules[c].name + "': input '" + in +
                                             "' is not produced by any rule and is not external or a reference");
    }
  }

  // Kahn's algorithm; the lowest source index among ready rules goes first.
  std::vector<std::vector<std::size_t>> adj(n);
  std::vector<std::size_t> indegree(n, 0);
  for (auto [p, c] : edge_set) {
    adj[p].push_back(c);
    ++indegree[c];
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    auto v = ready.top();
    ready.pop();
    order.push_back(v);
    for (auto u : adj[v]) {
      if (--indegree[u] == 0) ready.push(u);
    }
  }
  if (order.size() != n) {
    std::vector<std::string> stuck;
    for (std::size_t i = 0; i < n; ++i) {
      if (indegree[i] > 0) stuck.push_back(w.rules[i].name);
    }
    throw Error(Errc::CycleError, "cycle involving " + join(stuck, ", "));
  }

  TaskPlan plan;
  plan.sample_id = std::string(sample_id);
  for (auto i : order) {
    const Rule& rule = w.rules[i];
    StepSpec step;
    step.rule_name = rule.name;
    step.resolved_command = resolved[i].command;
    step.resolved_inputs = resolved[i].inputs;
    step.resolved_outputs = resolved[i].outputs;
    step.resources = merge_resources(rule.resources, defaults);
    step.image = w.image.value_or("");
    step.environment = {{"GFLOW_SAMPLE_ID", plan.sample_id},
                        {"GFLOW_RULE", rule.name},
                        {"GFLOW_INPUT", join(resolved[i].inputs, " ")},
                        {"GFLOW_OUTPUT", join(resolved[i].outputs, " ")},
                        {"GFLOW_REFERENCE", std::string(reference_root)},
                        {"GFLOW_WORKDIR", w.workdir.value_or(".")}};
    for (const auto& [k, v] : resolved[i].params) {
      if (k == "sampleID") continue;
      std::string env_key = "GFLOW_PARAM_";
      for (char ch : k) env_key += std::isalnum(static_cast<unsigned char>(ch)) ? static_cast<char>(std::toupper(ch)) : '_';
      step.environment.emplace_back(env_key, v);
    }
    plan.steps.push_back(std::move(step));
  }
  for (auto [p, c] : edge_set) plan.edges.emplace_back(w.rules[p].name, w.rules[c].name);
  std::sort(plan.edges.begin(), plan.edges.end());
  return plan;
}

nlohmann::ordered_json plan_to_json(const TaskPlan& plan) {
  nlohmann::ordered_json doc;
  doc["sample_id"] = plan.sample_id;
  doc["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : plan.steps) {
    nlohmann::ordered_json step;
    step["rule"] = s.rule_name;
    step["command"] = s.resolved_command;
    step["inputs"] = s.resolved_inputs;
    step["outputs"] = s.resolved_outputs;
    nlohmann::ordered_json res;
    if (s.resources.machine) res["machine"] = *s.resources.machine;
    if (s.resources.disk_gb) res["disk_gb"] = *s.resources.disk_gb;
    if (s.resources.disk_class) res["disk_class"] = std::string(to_string(*s.resources.disk_class));
    step["resources"] = res;
    step["image"] = s.image;
    doc["steps"].push_back(step);
  }
  doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& [p, c] : plan.edges) doc["edges"].push_back({p, c});
  return doc;
}

}  // namespace gflow
