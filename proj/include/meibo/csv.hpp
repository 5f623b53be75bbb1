#pragma once

#include <istream>
#include <string>
#include <vector>

namespace meibo::csv {

using Row = std::vector<std::string>;

/// RFC 4180 reader: quoted fields, doubled quotes, embedded newlines, CRLF.
/// A UTF-8 byte-order mark on the first field is dropped.
std::vector<Row> read(std::istream& in);
std::vector<Row> read_file(const std::string& path);

std::string quote(const std::string& field);
std::string format_row(const Row& row);

}  // namespace meibo::csv
