#pragma once

#include <string>

#include "qkd/tags.hpp"

namespace qkd {

// Binary tag-stream format "TTAG1":
//   8-byte magic "TTAG1\0\0\0"
//   8-byte little-endian record count
//   records: 8-byte little-endian picosecond timestamp + 1-byte channel code
//            (0=H, 1=V, 2=D, 3=A)
void write_stream(const TagStream& s, const std::string& path);
TagStream read_stream(const std::string& path, Party party = Party::Alice);

// Line-oriented debugging form: "timestamp,channel" per line, channel as one
// of H/V/D/A or 0..3. Lines starting with '#' are skipped.
void write_stream_text(const TagStream& s, const std::string& path);
TagStream read_stream_text(const std::string& path, Party party = Party::Alice);

} // namespace qkd
