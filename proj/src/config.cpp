#include "smelu/config.hpp"

#include <fstream>
#include <istream>
#include <sstream>

#include "smelu/error.hpp"
#include "smelu/text.hpp"

namespace smelu {

KeyValues KeyValues::parse(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = text::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, 1, "expected key = value");
    const auto key = text::trim(view.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, 1, "empty key");
    if (kv.contains(key)) throw ParseError(line_no, 1, "duplicate key '" + std::string(key) + "'");
    kv.set(key, text::trim(view.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in);
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return parse(in);
}

void KeyValues::set(std::string_view key, std::string_view value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::string(value);
      return;
    }
  }
  entries_.emplace_back(std::string(key), std::string(value));
}

std::optional<std::string_view> KeyValues::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return std::string_view(v);
  }
  return std::nullopt;
}

std::string KeyValues::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace smelu
