#include "qkd/ttag_io.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qkd {

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'T', 'A', 'G', '1', '\0', '\0', '\0'};

void put_u64le(std::uint8_t* p, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
}

DetectorChannel parse_channel(const std::string& tok) {
    if (tok.size() == 1) {
        switch (tok[0]) {
            case 'H': case '0': return DetectorChannel::H;
            case 'V': case '1': return DetectorChannel::V;
            case 'D': case '2': return DetectorChannel::D;
            case 'A': case '3': return DetectorChannel::A;
        }
    }
    throw std::runtime_error("bad channel token: '" + tok + "'");
}

} // namespace

void write_stream(const TagStream& s, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(kMagic.data(), kMagic.size());
    std::uint8_t hdr[8];
    put_u64le(hdr, s.tags.size());
    f.write(reinterpret_cast<char*>(hdr), 8);

    std::vector<std::uint8_t> buf;
    buf.resize(s.tags.size() * 9);
    std::uint8_t* p = buf.data();
    for (const auto& tag : s.tags) {
        put_u64le(p, static_cast<std::uint64_t>(tag.t));
        p[8] = static_cast<std::uint8_t>(tag.ch);
        p += 9;
    }
    f.write(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

TagStream read_stream(const std::string& path, Party party) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::array<char, 8> magic{};
    f.read(magic.data(), magic.size());
    if (!f || magic != kMagic) throw std::runtime_error("bad TTAG1 magic: " + path);
    std::uint8_t hdr[8];
    f.read(reinterpret_cast<char*>(hdr), 8);
    if (!f) throw std::runtime_error("truncated TTAG1 header: " + path);
    std::uint64_t count = get_u64le(hdr);

    TagStream s;
    s.party = party;
    s.tags.resize(count);
    std::vector<std::uint8_t> buf(count * 9);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::uint64_t>(f.gcount()) != buf.size())
        throw std::runtime_error("truncated TTAG1 records: " + path);
    const std::uint8_t* p = buf.data();
    for (std::uint64_t i = 0; i < count; ++i) {
        s.tags[i].t = static_cast<Ps>(get_u64le(p));
        std::uint8_t c = p[8];
        if (c > 3) throw std::runtime_error("bad channel code in " + path);
        s.tags[i].ch = static_cast<DetectorChannel>(c);
        p += 9;
    }
    return s;
}

void write_stream_text(const TagStream& s, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    static const char* names = "HVDA";
    for (const auto& tag : s.tags)
        f << tag.t << ',' << names[static_cast<int>(tag.ch)] << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

TagStream read_stream_text(const std::string& path, Party party) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    TagStream s;
    s.party = party;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("bad line in " + path + ": " + line);
        TimeTag tag;
        tag.t = std::stoll(line.substr(0, comma));
        tag.ch = parse_channel(line.substr(comma + 1));
        s.tags.push_back(tag);
    }
    return s;
}

} // namespace qkd
