#include "lesionmap/config_text.hpp"

#include <sstream>

namespace lesionmap {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigSyntaxError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        std::string key = trim(t.substr(0, eq));
        if (key.empty()) throw ConfigSyntaxError("config line " + std::to_string(line_no) + ": empty key");
        entries.emplace_back(std::move(key), trim(t.substr(eq + 1)));
    }
    return entries;
}

}  // namespace lesionmap
