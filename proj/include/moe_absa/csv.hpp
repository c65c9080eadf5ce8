#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace moeabsa::csv {

// RFC 4180 flavor: comma separated, double quotes, quotes doubled inside
// quoted fields. Newlines inside quoted fields are supported.

std::vector<std::vector<std::string>> parse(const std::string& content);
std::vector<std::vector<std::string>> read_file(const std::string& path);

std::string escape(const std::string& field);
void write_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace moeabsa::csv
