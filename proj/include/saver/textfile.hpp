#pragma once

#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace saver {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Line-oriented file with `[section]` headers. `#` starts a comment;
/// blank lines are dropped. Used by the feeder, config and problem formats.
struct SectionedText {
  struct Line {
    int number = 0;
    std::string text;
  };
  struct Section {
    std::string name;
    int header_line = 0;
    std::vector<Line> lines;
  };

  std::string source;
  std::vector<Section> sections;

  static SectionedText parse(std::istream& in, const std::string& source);
  static SectionedText read(const std::string& path);

  const Section* find(const std::string& name) const;
  /// Throws unless every section name is in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;
};

/// `key = value` lines of a section. Duplicate keys are an error.
class KeyValues {
 public:
  KeyValues(const SectionedText::Section& section, const std::string& source);
  KeyValues() = default;

  bool has(const std::string& key) const;
  std::string str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  long integer(const std::string& key, long fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::vector<double> numbers(const std::string& key) const;

  /// Throws naming the first key not in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::string where(const std::string& key) const;

  std::string source_, section_;
  std::map<std::string, std::string> values_;
  std::map<std::string, int> line_of_;
};

/// Whitespace-separated table whose first row is a header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;

  static Table from_section(const SectionedText::Section& section, const std::string& source);
  int column(const std::string& name) const;  // -1 when absent
};

double parse_double(const std::string& token, const std::string& context);
long parse_long(const std::string& token, const std::string& context);
std::string trim(const std::string& s);
std::vector<std::string> split_ws(const std::string& s);
std::vector<std::string> split_char(const std::string& s, char sep);

}  // namespace saver
