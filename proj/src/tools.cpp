// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/tools.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "kernelforge/task_io.hpp"

namespace kernelforge {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_known_tool(std::string_view name) {
  return std::find(std::begin(kToolNames), std::end(kToolNames), name) != std::end(kToolNames);
}

std::size_t estimate_tokens(std::size_t bytes) { return (bytes + 3) / 4; }

Observation truncate_observation(Observation obs, std::size_t cap) {
  obs.raw_bytes = obs.text.size();
  if (obs.text.size() > cap) {
    const auto dropped = obs.text.size() - cap;
    obs.text.resize(cap);
    obs.text += "\n[truncated " + std::to_string(dropped) + " bytes]";
    obs.truncated = true;
  }
  return obs;
}

namespace {

struct FieldSpec {
  const char* name;
  json::value_t type;  // number_unsigned stands for any number
  bool required;
};

bool type_ok(const json& v, json::value_t t) {
  if (t == json::value_t::number_unsigned) return v.is_number();
  if (t == json::value_t::number_integer) return v.is_number_integer() && v.get<long long>() >= 0;
  return v.type() == t;
}

std::optional<std::string> check_fields(const json& args, std::initializer_list<FieldSpec> specs) {
  if (!args.is_object()) return "arguments must be an object";
  for (const auto& [key, _] : args.items()) {
    bool known = false;
    for (const auto& s : specs) known = known || key == s.name;
    if (!known) return "unexpected argument '" + key + "'";
  }
  for (const auto& s : specs) {
    if (!args.contains(s.name)) {
      if (s.required) return std::string("missing argument '") + s.name + "'";
      continue;
    }
    if (!type_ok(args[s.name], s.type)) return std::string("argument '") + s.name + "' has the wrong type";
  }
  return std::nullopt;
}

constexpr auto kStr = json::value_t::string;
constexpr auto kBool = json::value_t::boolean;
constexpr auto kIndex = json::value_t::number_integer;
constexpr auto kNumber = json::value_t::number_unsigned;
constexpr auto kArray = json::value_t::array;

}  // namespace

std::optional<std::string> schema_error(const ToolCall& call) {
  const auto& a = call.args;
  const auto& t = call.tool;
  if (!is_known_tool(t)) return "unknown tool '" + t + "'";
  if (t == "Bash") {
    return check_fields(a, {{"command", kStr, true}, {"run_in_background", kBool, false},
                            {"timeout", kNumber, false}, {"description", kStr, false}});
  }
  if (t == "Read") {
    return check_fields(a, {{"file_path", kStr, true}, {"offset", kIndex, false},
                            {"limit", kIndex, false}});
  }
  if (t == "Write") return check_fields(a, {{"file_path", kStr, true}, {"content", kStr, true}});
  if (t == "Edit") {
    if (auto e = check_fields(a, {{"file_path", kStr, true}, {"old_string", kStr, true},
                                  {"new_string", kStr, true}, {"replace_all", kBool, false}})) {
      return e;
    }
    if (a["old_string"] == a["new_string"]) return "old_string and new_string are identical";
    return std::nullopt;
  }
  if (t == "MultiEdit") {
    if (auto e = check_fields(a, {{"file_path", kStr, true}, {"edits", kArray, true}})) return e;
    if (a["edits"].empty()) return "edits must not be empty";
    for (const auto& e : a["edits"]) {
      if (auto err = check_fields(e, {{"old_string", kStr, true}, {"new_string", kStr, true},
                                      {"replace_all", kBool, false}})) {
        return "edit: " + *err;
      }
      if (e["old_string"] == e["new_string"]) return "edit: old_string and new_string are identical";
    }
    return std::nullopt;
  }
  if (t == "Glob") return check_fields(a, {{"pattern", kStr, true}, {"path", kStr, false}});
  if (t == "Grep") {
    if (auto e = check_fields(a, {{"pattern", kStr, true}, {"path", kStr, false},
                                  {"glob", kStr, false}, {"output_mode", kStr, false},
                                  {"-i", kBool, false}})) {
      return e;
    }
    if (a.contains("output_mode") && a["output_mode"] != "content" &&
        a["output_mode"] != "files_with_matches") {
      return "output_mode must be content or files_with_matches";
    }
    return std::nullopt;
  }
  if (t == "BashOutput") return check_fields(a, {{"bash_id", kStr, true}});
  return check_fields(a, {{"shell_id", kStr, true}});  // KillBash
}

namespace {

std::vector<std::string> split_path(std::string_view p) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : p) {
    if (c == '/') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool glob_segments(const std::vector<std::string>& pat, std::size_t i,
                   const std::vector<std::string>& path, std::size_t j) {
  if (i == pat.size()) return j == path.size();
  if (pat[i] == "**") {
    for (std::size_t k = j; k <= path.size(); ++k) {
      if (glob_segments(pat, i + 1, path, k)) return true;
    }
    return false;
  }
  if (j == path.size()) return false;
  if (::fnmatch(pat[i].c_str(), path[j].c_str(), FNM_PERIOD) != 0) return false;
  return glob_segments(pat, i + 1, path, j + 1);
}

Observation fail(std::string text) {
  Observation o;
  o.text = std::move(text);
  o.error = true;
  return o;
}

Observation denied(const std::string& path, const std::string& reason) {
  auto o = fail("permission denied: " + path + " (" + reason + ")");
  o.permission_denied = true;
  return o;
}

Observation ok(std::string text) {
  Observation o;
  o.text = std::move(text);
  return o;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  std::string out;
  std::size_t last = 0;
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, last)) {
    out.append(s, last, pos - last);
    out += to;
    last = pos + from.size();
  }
  out.append(s, last);
  s = std::move(out);
}

}  // namespace

bool glob_match(std::string_view pattern, std::string_view path) {
  return glob_segments(split_path(pattern), 0, split_path(path), 0);
}

ToolSession::ToolSession(Workspace ws, UtilityHooks hooks, std::size_t observation_cap)
    : ws_(std::move(ws)), hooks_(std::move(hooks)), cap_(observation_cap) {
  env_ = {{"HOME", ws_.root.string()}, {"PWD", ws_.root.string()}, {"SHELL", "/bin/bash"}};
}

Observation ToolSession::dispatch(const ToolCall& call) {
  Observation obs;
  if (auto err = schema_error(call)) {
    obs = fail("invalid tool call: " + *err);
    obs.schema_violation = true;
  } else {
    try {
      const auto& a = call.args;
      const auto& t = call.tool;
      if (t == "Read") obs = read(a);
      else if (t == "Write") obs = write(a);
      else if (t == "Edit") obs = edit(a, false);
      else if (t == "MultiEdit") obs = edit(a, true);
      else if (t == "Glob") obs = glob(a);
      else if (t == "Grep") obs = grep(a);
      else if (t == "Bash") obs = bash(a);
      else if (t == "BashOutput") obs = bash_output(a);
      else obs = kill_bash(a);
    } catch (const fs::filesystem_error& e) {
      obs = fail(std::string("filesystem error: ") + e.code().message());
    }
  }
  return truncate_observation(std::move(obs), cap_);
}

Observation ToolSession::read(const json& a) {
  const auto path = a["file_path"].get<std::string>();
  const auto d = check_permission(ws_, path, AccessMode::kRead);
  if (!d.allowed) return denied(path, d.reason);
  const auto full = ws_.root / d.relative;
  if (!fs::exists(full)) return fail("file not found: " + path);
  if (fs::is_directory(full)) return fail("is a directory: " + path);
  const auto text = read_text_file(full);
  read_.insert(d.relative);
  if (text.empty()) return ok("<file is empty>");
  const std::size_t offset = std::max<std::size_t>(1, a.value("offset", std::size_t{1}));
  const std::size_t limit = a.value("limit", std::size_t{2000});
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  char prefix[32];
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (n < offset) continue;
    if (n >= offset + limit) break;
    std::snprintf(prefix, sizeof(prefix), "%6zu\t", n);
    out << prefix << line << '\n';
  }
  return ok(out.str());
}

Observation ToolSession::write(const json& a) {
  const auto path = a["file_path"].get<std::string>();
  const auto d = check_permission(ws_, path, AccessMode::kWrite);
  if (!d.allowed) return denied(path, d.reason);
  const auto full = ws_.root / d.relative;
  if (fs::is_directory(full)) return fail("is a directory: " + path);
  if (fs::exists(full) && !read_.contains(d.relative)) {
    return fail("read-before-write: Read " + d.relative + " before overwriting it");
  }
  fs::create_directories(full.parent_path());
  write_text_file_atomic(full, a["content"].get<std::string>());
  read_.insert(d.relative);
  return ok("wrote " + std::to_string(a["content"].get<std::string>().size()) + " bytes to " +
            d.relative);
}

Observation ToolSession::edit(const json& a, bool multi) {
  const auto path = a["file_path"].get<std::string>();
  const auto d = check_permission(ws_, path, AccessMode::kWrite);
  if (!d.allowed) return denied(path, d.reason);
  const auto full = ws_.root / d.relative;
  if (!fs::is_regular_file(full)) return fail("file not found: " + path);
  if (!read_.contains(d.relative)) {
    return fail("read-before-write: Read " + d.relative + " before editing it");
  }
  std::string text = read_text_file(full);
  const json edits = multi ? a["edits"] : json::array({a});
  std::size_t index = 0;
  for (const auto& e : edits) {
    const auto from = e["old_string"].get<std::string>();
    const auto to = e["new_string"].get<std::string>();
    const bool all = e.value("replace_all", false);
    const auto n = from.empty() ? 0 : count_occurrences(text, from);
    const std::string where = multi ? "edit " + std::to_string(index) + ": " : "";
    if (n == 0) {
      return fail(where + "old_string not found" + (multi ? "; no edits applied" : ""));
    }
    if (n > 1 && !all) {
      return fail(where + "old_string occurs " + std::to_string(n) +
                  " times; set replace_all or add context" + (multi ? "; no edits applied" : ""));
    }
    if (all) {
      replace_all(text, from, to);
    } else {
      text.replace(text.find(from), from.size(), to);
    }
    ++index;
  }
  write_text_file_atomic(full, text);
  return ok("applied " + std::to_string(edits.size()) + " edit(s) to " + d.relative);
}

Observation ToolSession::glob(const json& a) {
  const auto base_arg = a.value("path", std::string("."));
  const auto d = check_permission(ws_, base_arg, AccessMode::kRead);
  if (!d.allowed) return denied(base_arg, d.reason);
  const auto base = ws_.root / d.relative;
  if (!fs::is_directory(base)) return fail("not a directory: " + base_arg);
  const auto pattern = a["pattern"].get<std::string>();
  std::ostringstream out;
  for (const auto& rel : list_files(base)) {
    if (glob_match(pattern, rel)) {
      out << (d.relative.empty() ? rel : d.relative + "/" + rel) << '\n';
    }
  }
  const auto s = out.str();
  return ok(s.empty() ? "no files matched" : s);
}

Observation ToolSession::grep(const json& a) {
  const auto base_arg = a.value("path", std::string("."));
  const auto d = check_permission(ws_, base_arg, AccessMode::kRead);
  if (!d.allowed) return denied(base_arg, d.reason);
  std::regex re;
  try {
    auto flags = std::regex::ECMAScript;
    if (a.value("-i", false)) flags |= std::regex::icase;
    re = std::regex(a["pattern"].get<std::string>(), flags);
  } catch (const std::regex_error& e) {
    return fail(std::string("invalid regex: ") + e.what());
  }
  const auto base = ws_.root / d.relative;
  std::vector<std::string> files;
  if (fs::is_regular_file(base)) {
    files.push_back(d.relative);
  } else if (fs::is_directory(base)) {
    for (const auto& rel : list_files(base)) {
      files.push_back(d.relative.empty() ? rel : d.relative + "/" + rel);
    }
  } else {
    return fail("path not found: " + base_arg);
  }
  const auto file_glob = a.value("glob", std::string());
  const bool names_only = a.value("output_mode", std::string("content")) == "files_with_matches";
  std::ostringstream out;
  for (const auto& rel : files) {
    if (!file_glob.empty()) {
      const auto name = fs::path(rel).filename().string();
      const bool hit = file_glob.find('/') == std::string::npos ? glob_match(file_glob, name)
                                                                : glob_match(file_glob, rel);
      if (!hit) continue;
    }
    std::istringstream in(read_text_file(ws_.root / rel));
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      if (!std::regex_search(line, re)) continue;
      if (names_only) {
        out << rel << '\n';
        break;
      }
      out << rel << ':' << n << ':' << line << '\n';
    }
  }
  const auto s = out.str();
  return ok(s.empty() ? "no matches" : s);
}

// ---------------------------------------------------------------------------
// Jailed shell.

namespace {

struct Token {
  std::string text;
  bool op = false;
  bool glob = false;  // unquoted glob characters present
  std::size_t end = 0;  // offset just past an operator
};

struct LexError {
  std::string message;
};

std::vector<Token> lex(const std::string& s, const std::map<std::string, std::string>& env) {
  std::vector<Token> out;
  Token cur;
  bool in_word = false;
  auto flush = [&] {
    if (in_word) out.push_back(std::move(cur));
    cur = Token{};
    in_word = false;
  };
  auto expand_var = [&](std::size_t& i) {
    // s[i] == '$'
    if (i + 1 < s.size() && (s[i + 1] == '(' )) throw LexError{"command substitution is not supported"};
    std::string name;
    std::size_t j = i + 1;
    if (j < s.size() && s[j] == '{') {
      const auto close = s.find('}', j);
      if (close == std::string::npos) throw LexError{"unterminated ${"};
      name = s.substr(j + 1, close - j - 1);
      j = close + 1;
    } else {
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) {
        name.push_back(s[j++]);
      }
    }
    if (name.empty()) {
      cur.text.push_back('$');
    } else if (auto it = env.find(name); it != env.end()) {
      cur.text += it->second;
    }
    i = j - 1;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '\'') {
      const auto close = s.find('\'', i + 1);
      if (close == std::string::npos) throw LexError{"unterminated quote"};
      cur.text += s.substr(i + 1, close - i - 1);
      in_word = true;
      i = close;
    } else if (c == '"') {
      in_word = true;
      std::size_t j = i + 1;
      for (; j < s.size() && s[j] != '"'; ++j) {
        if (s[j] == '\\' && j + 1 < s.size() && std::string_view("\"\\$`").find(s[j + 1]) != std::string_view::npos) {
          cur.text.push_back(s[++j]);
        } else if (s[j] == '$') {
          expand_var(j);
        } else if (s[j] == '`') {
          throw LexError{"command substitution is not supported"};
        } else {
          cur.text.push_back(s[j]);
        }
      }
      if (j >= s.size()) throw LexError{"unterminated quote"};
      i = j;
    } else if (c == '\\' && i + 1 < s.size()) {
      cur.text.push_back(s[++i]);
      in_word = true;
    } else if (c == '$') {
      in_word = true;
      expand_var(i);
    } else if (c == '`') {
      throw LexError{"command substitution is not supported"};
    } else if (c == ' ' || c == '\t' || c == '\n') {
      flush();
    } else if (c == '&' || c == '|' || c == ';' || c == '>' || c == '<' || c == '(' || c == ')') {
      // "2>" and "2>&1" bind to the preceding digit.
      if (c == '>' && in_word && cur.text == "2" && !cur.glob) {
        cur = Token{};
        in_word = false;
        if (s.compare(i, 3, ">&1") == 0) {
          out.push_back({"2>&1", true, false});
          i += 2;
        } else {
          out.push_back({"2>", true, false});
        }
        continue;
      }
      flush();
      std::string op(1, c);
      if (i + 1 < s.size() && (c == '&' || c == '|' || c == '>') && s[i + 1] == c) {
        op.push_back(c);
        ++i;
      }
      out.push_back({op, true, false, i + 1});
    } else {
      if (c == '*' || c == '?' || c == '[') cur.glob = true;
      cur.text.push_back(c);
      in_word = true;
    }
  }
  flush();
  return out;
}

bool is_assignment(const std::string& w) {
  const auto eq = w.find('=');
  if (eq == std::string::npos || eq == 0) return false;
  for (std::size_t i = 0; i < eq; ++i) {
    const char c = w[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return !std::isdigit(static_cast<unsigned char>(w[0]));
}

}  // namespace

std::vector<std::string> ToolSession::expand_glob_word(const std::string& word) const {
  std::vector<std::string> out;
  if (word.starts_with('/') || word.find("..") != std::string::npos) return {word};
  if (word.ends_with('/')) {
    // A trailing slash matches directories only.
    const auto stem = word.substr(0, word.size() - 1);
    for (auto it = fs::recursive_directory_iterator(ws_.root); it != fs::recursive_directory_iterator(); ++it) {
      if (!it->is_directory()) continue;
      const auto rel = it->path().lexically_relative(ws_.root).generic_string();
      if (glob_match(stem, rel)) out.push_back(rel + "/");
    }
    std::sort(out.begin(), out.end());
  } else {
    for (const auto& rel : list_files(ws_.root)) {
      if (glob_match(word, rel)) out.push_back(rel);
    }
  }
  if (out.empty()) out.push_back(word);
  return out;
}

ToolSession::ShellResult ToolSession::run_simple(std::vector<std::string> words, bool has_redirect,
                                                 const std::string& redirect_target, bool append) {
  std::map<std::string, std::string> env = env_;
  while (!words.empty() && is_assignment(words.front())) {
    const auto eq = words.front().find('=');
    env[words.front().substr(0, eq)] = words.front().substr(eq + 1);
    words.erase(words.begin());
  }
  if (!words.empty() && words.front() == "sudo") words.erase(words.begin());
  ShellResult r;
  auto err = [&](std::string msg, int status = 1) {
    r.out += msg + "\n";
    r.status = status;
  };
  auto deny = [&](const std::string& cmd, const std::string& path, const std::string& reason) {
    err(cmd + ": " + path + ": permission denied (" + reason + ")");
    r.denied = true;
  };

  std::string out;
  if (words.empty()) {
    // Bare assignments persist in the session.
    for (const auto& [k, v] : env) env_[k] = v;
  } else {
    const auto cmd = words.front();
    std::vector<std::string> args(words.begin() + 1, words.end());
    std::vector<std::string> flags, operands;
    for (const auto& a : args) (a.size() > 1 && a[0] == '-' ? flags : operands).push_back(a);
    auto has_flag = [&](char f) {
      for (const auto& fl : flags) {
        if (!fl.starts_with("--") && fl.find(f) != std::string::npos) return true;
      }
      return false;
    };

    if (cmd == "true" || cmd == ":") {
    } else if (cmd == "false") {
      r.status = 1;
    } else if (cmd == "pwd") {
      out = ws_.root.string() + "\n";
    } else if (cmd == "echo") {
      const bool newline = !(args.size() && args[0] == "-n");
      for (std::size_t i = newline ? 0 : 1; i < args.size(); ++i) {
        out += args[i];
        if (i + 1 < args.size()) out += " ";
      }
      if (newline) out += "\n";
    } else if (cmd == "export") {
      for (const auto& a : args) {
        if (!is_assignment(a)) return err("export: '" + a + "': not a valid assignment"), r;
        const auto eq = a.find('=');
        env_[a.substr(0, eq)] = a.substr(eq + 1);
      }
    } else if (cmd == "env" || cmd == "printenv") {
      for (const auto& [k, v] : env) out += k + "=" + v + "\n";
    } else if (cmd == "cd") {
      const auto target = operands.empty() ? std::string(".") : operands[0];
      const auto d = check_permission(ws_, target, AccessMode::kRead);
      if (!d.allowed || !d.relative.empty()) {
        err("cd: working directory is pinned to the workspace root");
      }
    } else if (cmd == "ls") {
      if (operands.empty()) operands.push_back(".");
      for (const auto& p : operands) {
        const auto d = check_permission(ws_, p, AccessMode::kRead);
        if (!d.allowed) {
          deny("ls", p, d.reason);
          continue;
        }
        const auto full = ws_.root / d.relative;
        if (!fs::exists(full)) {
          err("ls: cannot access '" + p + "': No such file or directory", 2);
          continue;
        }
        if (!fs::is_directory(full)) {
          out += p + "\n";
          continue;
        }
        if (operands.size() > 1) out += p + ":\n";
        std::vector<std::string> names;
        for (const auto& e : fs::directory_iterator(full)) {
          names.push_back(e.path().filename().string() + (e.is_directory() ? "/" : ""));
        }
        std::sort(names.begin(), names.end());
        for (const auto& n : names) out += n + "\n";
      }
    } else if (cmd == "cat") {
      for (const auto& p : operands) {
        const auto d = check_permission(ws_, p, AccessMode::kRead);
        if (!d.allowed) {
          deny("cat", p, d.reason);
          continue;
        }
        const auto full = ws_.root / d.relative;
        if (fs::is_directory(full)) {
          err("cat: " + p + ": Is a directory");
        } else if (!fs::exists(full)) {
          err("cat: " + p + ": No such file or directory");
        } else {
          out += read_text_file(full);
        }
      }
    } else if (cmd == "rm" || cmd == "mkdir" || cmd == "touch") {
      if (operands.empty()) return err(cmd + ": missing operand"), r;
      for (const auto& p : operands) {
        const auto d = check_permission(ws_, p, AccessMode::kWrite);
        if (!d.allowed) {
          deny(cmd, p, d.reason);
          continue;
        }
        const auto full = ws_.root / d.relative;
        if (cmd == "mkdir") {
          if (fs::exists(full) && !has_flag('p')) {
            err("mkdir: cannot create directory '" + p + "': File exists");
          } else if (!has_flag('p') && !fs::is_directory(full.parent_path())) {
            err("mkdir: cannot create directory '" + p + "': No such file or directory");
          } else {
            fs::create_directories(full);
          }
        } else if (cmd == "touch") {
          if (!fs::exists(full)) {
            if (!fs::is_directory(full.parent_path())) {
              err("touch: cannot touch '" + p + "': No such file or directory");
            } else {
              std::ofstream(full).flush();
            }
          }
        } else {
          if (!fs::exists(full)) {
            if (!has_flag('f')) err("rm: cannot remove '" + p + "': No such file or directory");
          } else if (fs::is_directory(full) && !has_flag('r') && !has_flag('R')) {
            err("rm: cannot remove '" + p + "': Is a directory");
          } else {
            fs::remove_all(full);
          }
        }
      }
    } else if (cmd == "bash" || cmd == "sh" || cmd == "./utils/compile.sh" ||
               cmd == "utils/compile.sh") {
      const auto script = (cmd == "bash" || cmd == "sh") ? (operands.empty() ? "" : operands[0]) : cmd;
      const auto d = check_permission(ws_, script, AccessMode::kRead);
      if (d.allowed && d.relative == "utils/compile.sh") {
        out = hooks_.compile ? hooks_.compile() : "compile: no backend attached\n";
      } else {
        err(cmd + ": only utils/compile.sh may be executed", 126);
      }
    } else if (cmd == "python3" || cmd == "python") {
      if (args.size() == 2 && args[0] == "-m" && args[1] == "utils.verification") {
        out = hooks_.verification ? hooks_.verification() : "verification: no backend attached\n";
      } else if (args.size() == 2 && args[0] == "-m" && args[1] == "utils.profiling") {
        out = hooks_.profiling ? hooks_.profiling() : "profiling: no backend attached\n";
      } else {
        err(cmd + ": only -m utils.verification and -m utils.profiling are available", 126);
      }
    } else {
      err(cmd + ": command not available in this sandbox", 127);
    }
  }

  if (has_redirect && redirect_target != "/dev/null") {
    const auto d = check_permission(ws_, redirect_target, AccessMode::kWrite);
    if (!d.allowed) {
      deny("bash", redirect_target, d.reason);
      return r;
    }
    const auto full = ws_.root / d.relative;
    if (fs::is_directory(full)) {
      err("bash: " + redirect_target + ": Is a directory");
      return r;
    }
    if (!fs::is_directory(full.parent_path())) {
      err("bash: " + redirect_target + ": No such file or directory");
      return r;
    }
    std::ofstream f(full, append ? std::ios::app : std::ios::trunc);
    f << out;
  } else if (!has_redirect) {
    r.out = out + r.out;
  }
  return r;
}

ToolSession::ShellResult ToolSession::run_shell(const std::string& command) {
  ShellResult total;
  std::vector<Token> toks;
  try {
    toks = lex(command, env_);
  } catch (const LexError& e) {
    total.out = "bash: " + e.message + "\n";
    total.status = 2;
    return total;
  }
  std::size_t i = 0, offset = 0;
  std::string pending_op;  // connector before the next command
  int last_status = 0;
  while (i < toks.size()) {
    std::vector<std::string> words;
    bool has_redirect = false, append = false;
    std::string target;
    for (; i < toks.size(); ++i) {
      const auto& t = toks[i];
      if (!t.op) {
        if (t.glob) {
          for (auto& w : expand_glob_word(t.text)) words.push_back(std::move(w));
        } else {
          words.push_back(t.text);
        }
        continue;
      }
      if (t.text == ">" || t.text == ">>") {
        if (i + 1 >= toks.size() || toks[i + 1].op) {
          total.out += "bash: syntax error near '" + t.text + "'\n";
          total.status = 2;
          return total;
        }
        has_redirect = true;
        append = t.text == ">>";
        target = toks[++i].text;
        continue;
      }
      if (t.text == "2>&1") continue;
      if (t.text == "2>") {
        if (i + 1 < toks.size() && toks[i + 1].text == "/dev/null") {
          ++i;
          continue;
        }
        total.out += "bash: stderr redirection is only supported to /dev/null\n";
        total.status = 2;
        return total;
      }
      if (t.text == "&&" || t.text == "||" || t.text == ";") break;
      total.out += "bash: '" + t.text + "' is not supported in this sandbox\n";
      total.status = 2;
      return total;
    }
    const bool run = pending_op.empty() || pending_op == ";" ||
                     (pending_op == "&&" && last_status == 0) ||
                     (pending_op == "||" && last_status != 0);
    if (run && (!words.empty() || has_redirect)) {
      auto r = run_simple(std::move(words), has_redirect, target, append);
      total.out += r.out;
      total.denied = total.denied || r.denied;
      last_status = r.status;
    }
    if (i < toks.size()) {
      pending_op = toks[i].text;
      // Variables expand per command, after earlier assignments took effect.
      offset += toks[i].end;
      toks = lex(command.substr(offset), env_);
      i = 0;
    }
  }
  total.status = last_status;
  return total;
}

Observation ToolSession::bash(const json& a) {
  auto command = a["command"].get<std::string>();
  bool background = a.value("run_in_background", false);
  // A trailing '&' backgrounds the whole line.
  auto trimmed = command;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back()))) trimmed.pop_back();
  if (trimmed.ends_with('&') && !trimmed.ends_with("&&")) {
    trimmed.pop_back();
    command = trimmed;
    background = true;
  }
  auto r = run_shell(command);
  if (background) {
    const auto id = "bash_" + std::to_string(next_job_++);
    jobs_[id] = Job{r.out, 0, "completed", r.status};
    return ok("started background job " + id);
  }
  Observation o;
  o.text = r.out;
  if (r.status != 0) o.text += "[exit " + std::to_string(r.status) + "]\n";
  o.error = r.status != 0;
  o.permission_denied = r.denied;
  return o;
}

Observation ToolSession::bash_output(const json& a) {
  const auto id = a["bash_id"].get<std::string>();
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return fail("no background job " + id);
  auto& job = it->second;
  std::string text = "status: " + job.status + " (exit " + std::to_string(job.exit_code) + ")\n";
  text += job.output.substr(job.delivered);
  job.delivered = job.output.size();
  return ok(text);
}

Observation ToolSession::kill_bash(const json& a) {
  const auto id = a["shell_id"].get<std::string>();
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return fail("no background job " + id);
  it->second.status = "killed";
  return ok("killed " + id);
}

}  // namespace kernelforge
