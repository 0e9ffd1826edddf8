#pragma once

#include <map>
#include <string>
#include <string_view>

namespace oscar {

/// Replaces each "{{key}}" with its value. Unknown placeholders are left as-is.
inline std::string fill_template(std::string_view tpl,
                                 const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const auto open = tpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tpl.substr(pos, open - pos));
    const auto key = tpl.substr(open + 2, close - open - 2);
    if (auto it = values.find(key); it != values.end()) {
      out += it->second;
    } else {
      out.append(tpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tpl.substr(pos));
  return out;
}

}  // namespace oscar
