#pragma once

// Flat `key = value` configuration text. Keys carry section prefixes such as
// `model.`, `data.`, `optim.` and `nondet.`; '#' starts a comment.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smelu {

class KeyValues {
 public:
  /// Throws ParseError on lines without '=' and on duplicate keys.
  static KeyValues parse(std::istream& in);
  static KeyValues parse(std::string_view text);
  static KeyValues load(const std::filesystem::path& path);

  /// Adds the key or replaces its value.
  void set(std::string_view key, std::string_view value);
  std::optional<std::string_view> get(std::string_view key) const;
  bool contains(std::string_view key) const { return get(key).has_value(); }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// One `key = value` line per entry, in insertion order.
  std::string serialize() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace smelu
