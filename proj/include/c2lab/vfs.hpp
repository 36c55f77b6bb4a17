#pragma once

// The victim's simulated machine. Commands can only ever touch this
// structure; nothing here reaches the host filesystem.

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "c2lab/codec.hpp"
#include "c2lab/error.hpp"

namespace c2lab {

class VirtualFileSystem {
 public:
  VirtualFileSystem() : VirtualFileSystem("user", "/") {}

  VirtualFileSystem(std::string user, std::string cwd) : user_(std::move(user)) {
    dirs_.insert("/");
    cwd_ = normalize(cwd, "/");
    add_dir(cwd_);
  }

  const std::string& user() const noexcept { return user_; }
  const std::string& cwd() const noexcept { return cwd_; }
  const std::map<std::string, Bytes>& files() const noexcept { return files_; }

  /// Absolute, normalized form of `path` relative to the working directory.
  std::string resolve(std::string_view path) const { return normalize(path, cwd_); }

  void add_dir(std::string_view path) {
    const auto p = resolve(path);
    for (auto d = p; d != "/"; d = parent(d)) dirs_.insert(d);
  }

  void write(std::string_view path, Bytes content) {
    const auto p = resolve(path);
    if (dirs_.contains(p)) throw Error(Errc::FileNotFound, p + " is a directory");
    add_dir(parent(p));
    files_[p] = std::move(content);
  }

  const Bytes& read(std::string_view path) const {
    const auto it = files_.find(resolve(path));
    if (it == files_.end()) throw Error(Errc::FileNotFound, std::string(path));
    return it->second;
  }

  bool is_dir(std::string_view path) const { return dirs_.contains(resolve(path)); }

  /// Immediate children of a directory, sorted by name.
  std::vector<std::string> list(std::string_view path) const {
    const auto p = resolve(path);
    if (!dirs_.contains(p)) throw Error(Errc::FileNotFound, p);
    std::set<std::string> names;
    auto collect = [&](const std::string& entry) {
      if (entry != "/" && parent(entry) == p) names.insert(entry.substr(entry.rfind('/') + 1));
    };
    for (const auto& d : dirs_) collect(d);
    for (const auto& [f, _] : files_) collect(f);
    return {names.begin(), names.end()};
  }

  static std::string parent(const std::string& p) {
    const auto slash = p.rfind('/');
    return slash == 0 ? "/" : p.substr(0, slash);
  }

  static std::string normalize(std::string_view path, std::string_view base) {
    std::vector<std::string> parts;
    auto push = [&](std::string_view s) {
      std::size_t i = 0;
      while (i <= s.size()) {
        auto j = s.find('/', i);
        if (j == std::string_view::npos) j = s.size();
        const auto seg = s.substr(i, j - i);
        if (seg == "..") {
          if (!parts.empty()) parts.pop_back();
        } else if (!seg.empty() && seg != ".") {
          parts.emplace_back(seg);
        }
        i = j + 1;
      }
    };
    if (!path.starts_with('/')) push(base);
    push(path);
    std::string out;
    for (const auto& p : parts) out += "/" + p;
    return out.empty() ? "/" : out;
  }

 private:
  std::string user_;
  std::string cwd_;
  std::set<std::string> dirs_;
  std::map<std::string, Bytes> files_;
};

/// Closed shell grammar: `whoami`, `pwd`, `ls -a`, `cat <path>`, joined by
/// `&&`. Sub-command outputs are joined with a newline.
inline std::string run_mini_shell(std::string_view line, const VirtualFileSystem& vfs) {
  std::vector<std::string> tokens;
  {
    std::istringstream in{std::string(line)};
    for (std::string t; in >> t;) tokens.push_back(t);
  }
  if (tokens.empty()) throw Error(Errc::UnsupportedShellToken, "empty command line");

  std::vector<std::vector<std::string>> segments(1);
  for (auto& t : tokens) {
    if (t == "&&")
      segments.emplace_back();
    else
      segments.back().push_back(std::move(t));
  }

  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    std::string part;
    if (seg.empty()) {
      throw Error(Errc::UnsupportedShellToken, "dangling '&&'");
    } else if (seg.size() == 1 && seg[0] == "whoami") {
      part = vfs.user();
    } else if (seg.size() == 1 && seg[0] == "pwd") {
      part = vfs.cwd();
    } else if (seg.size() == 2 && seg[0] == "ls" && seg[1] == "-a") {
      part = ".\n..";
      for (const auto& name : vfs.list(vfs.cwd())) part += "\n" + name;
    } else if (seg.size() == 2 && seg[0] == "cat") {
      part = to_text(vfs.read(seg[1]));
    } else {
      std::string bad;
      for (const auto& t : seg) bad += (bad.empty() ? "" : " ") + t;
      throw Error(Errc::UnsupportedShellToken, "'" + bad + "'");
    }
    if (i > 0) out += '\n';
    out += part;
  }
  return out;
}

}  // namespace c2lab
