#ifndef P2MT_CSV_HPP
#define P2MT_CSV_HPP

#include <ostream>
#include <string>
#include <vector>

namespace p2mt {

/// Quote a field per RFC 4180 when it contains a comma, quote, or newline.
std::string csv_escape(const std::string& field);

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// Parse a whole CSV file, honoring quoted fields. Throws DataError on
/// unbalanced quotes.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double x);

}  // namespace p2mt

#endif
