#include "saver/textfile.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace saver {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_char(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_double(const std::string& token, const std::string& context) {
  const std::string t = trim(token);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ParseError(context + ": expected a number, got '" + token + "'");
  }
  return v;
}

long parse_long(const std::string& token, const std::string& context) {
  const std::string t = trim(token);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ParseError(context + ": expected an integer, got '" + token + "'");
  }
  return v;
}

SectionedText SectionedText::parse(std::istream& in, const std::string& source) {
  SectionedText doc;
  doc.source = source;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) {
        throw ParseError(source + ":" + std::to_string(number) + ": malformed section header '" +
                         text + "'");
      }
      const std::string name = trim(text.substr(1, text.size() - 2));
      if (doc.find(name) != nullptr) {
        throw ParseError(source + ":" + std::to_string(number) + ": duplicate section [" + name +
                         "]");
      }
      doc.sections.push_back({name, number, {}});
      continue;
    }
    if (doc.sections.empty()) {
      throw ParseError(source + ":" + std::to_string(number) + ": content before first section");
    }
    doc.sections.back().lines.push_back({number, text});
  }
  return doc;
}

SectionedText SectionedText::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse(in, path);
}

const SectionedText::Section* SectionedText::find(const std::string& name) const {
  for (const auto& s : sections) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void SectionedText::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& s : sections) {
    if (std::find(allowed.begin(), allowed.end(), s.name) == allowed.end()) {
      throw ParseError(source + ":" + std::to_string(s.header_line) + ": unknown section [" +
                       s.name + "]");
    }
  }
}

KeyValues::KeyValues(const SectionedText::Section& section, const std::string& source)
    : source_(source), section_(section.name) {
  for (const auto& line : section.lines) {
    const auto eq = line.text.find('=');
    const std::string loc = source + ":" + std::to_string(line.number);
    if (eq == std::string::npos) {
      throw ParseError(loc + ": expected 'key = value' in [" + section_ + "]");
    }
    const std::string key = trim(line.text.substr(0, eq));
    const std::string value = trim(line.text.substr(eq + 1));
    if (key.empty()) throw ParseError(loc + ": empty key");
    if (values_.count(key) != 0) throw ParseError(loc + ": duplicate key '" + key + "'");
    values_[key] = value;
    line_of_[key] = line.number;
  }
}

std::string KeyValues::where(const std::string& key) const {
  const auto it = line_of_.find(key);
  const std::string line = it == line_of_.end() ? "" : ":" + std::to_string(it->second);
  return source_ + line + ": [" + section_ + "] " + key;
}

bool KeyValues::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KeyValues::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ParseError(source_ + ": [" + section_ + "] missing key '" + key + "'");
  return it->second;
}

std::string KeyValues::str(const std::string& key, const std::string& fallback) const {
  return has(key) ? str(key) : fallback;
}

double KeyValues::number(const std::string& key) const { return parse_double(str(key), where(key)); }

double KeyValues::number(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

long KeyValues::integer(const std::string& key, long fallback) const {
  return has(key) ? parse_long(str(key), where(key)) : fallback;
}

bool KeyValues::boolean(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParseError(where(key) + ": expected a boolean, got '" + v + "'");
}

std::vector<double> KeyValues::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : split_ws(str(key))) out.push_back(parse_double(tok, where(key)));
  return out;
}

void KeyValues::require_known(const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : values_) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ParseError(where(key) + ": unknown key");
    }
  }
}

Table Table::from_section(const SectionedText::Section& section, const std::string& source) {
  Table t;
  if (section.lines.empty()) {
    throw ParseError(source + ":" + std::to_string(section.header_line) + ": [" + section.name +
                     "] needs a header row");
  }
  t.header = split_ws(section.lines.front().text);
  for (std::size_t i = 1; i < section.lines.size(); ++i) {
    auto row = split_ws(section.lines[i].text);
    if (row.size() != t.header.size()) {
      throw ParseError(source + ":" + std::to_string(section.lines[i].number) + ": expected " +
                       std::to_string(t.header.size()) + " columns, got " +
                       std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
    t.row_lines.push_back(section.lines[i].number);
  }
  return t;
}

int Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

}  // namespace saver
