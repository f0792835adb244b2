#pragma once

#include "vle/error.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

namespace vle::detail {

// Little-endian primitives shared by the binary file formats.

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& os) : os_(os) {}

    void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v)
    {
        for (int b = 0; b < 4; ++b)
            u8(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    void u64(std::uint64_t v)
    {
        for (int b = 0; b < 8; ++b)
            u8(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

private:
    std::ostream& os_;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& is) : is_(is) {}

    std::uint8_t u8()
    {
        const int c = is_.get();
        if (c == std::char_traits<char>::eof())
            throw IoError("file is truncated");
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32()
    {
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b)
            v |= std::uint32_t{u8()} << (8 * b);
        return v;
    }
    std::uint64_t u64()
    {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
            v |= std::uint64_t{u8()} << (8 * b);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str()
    {
        const auto n = u32();
        if (n > (1u << 20))
            throw IoError("file has an implausible string length");
        std::string s(n, '\0');
        if (!is_.read(s.data(), n))
            throw IoError("file is truncated");
        return s;
    }

private:
    std::istream& is_;
};

} // namespace vle::detail
