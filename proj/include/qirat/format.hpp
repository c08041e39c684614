// Copyright 2026-present the qirat project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Shared 64-byte little-endian header used by every binary file this library
// writes (EMBS embeddings, SQIX/PQIX/HNSX indexes). Layout:
//
//   0..3   magic (4 ASCII bytes)
//   4..7   version u32 (= 1)
//   8      dtype u8 (0 = float32, 1 = float16)
//   9      normalized u8 (0/1)
//   10..15 reserved, zero
//   16..19 dim u32
//   20..23 reserved, zero
//   24..31 count u64
//   32..63 four u64 slots whose meaning is owned by the file type (zero if unused)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qirat/common.hpp"

namespace qirat::format {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline constexpr std::size_t kHeaderBytes = 64;
inline constexpr std::uint32_t kVersion = 1;

struct FileHeader {
    std::array<char, 4> magic{};
    std::uint32_t version = kVersion;
    std::uint8_t dtype = 0;
    std::uint8_t normalized = 0;
    std::uint32_t dim = 0;
    std::uint64_t count = 0;
    std::array<std::uint64_t, 4> extra{};
};

inline std::array<char, 4>
magic_of(std::string_view text) {
    std::array<char, 4> m{};
    std::memcpy(m.data(), text.data(), 4);
    return m;
}

template <typename T>
inline void
put(unsigned char* dst, T value) {
    std::memcpy(dst, &value, sizeof(T));
}

template <typename T>
inline T
get(const unsigned char* src) {
    T value;
    std::memcpy(&value, src, sizeof(T));
    return value;
}

inline std::array<unsigned char, kHeaderBytes>
encode_header(const FileHeader& h) {
    std::array<unsigned char, kHeaderBytes> buf{};
    std::memcpy(buf.data(), h.magic.data(), 4);
    put<std::uint32_t>(buf.data() + 4, h.version);
    buf[8] = h.dtype;
    buf[9] = h.normalized;
    put<std::uint32_t>(buf.data() + 16, h.dim);
    put<std::uint64_t>(buf.data() + 24, h.count);
    for (std::size_t i = 0; i < h.extra.size(); ++i) {
        put<std::uint64_t>(buf.data() + 32 + 8 * i, h.extra[i]);
    }
    return buf;
}

inline FileHeader
decode_header(std::span<const unsigned char, kHeaderBytes> buf) {
    FileHeader h;
    std::memcpy(h.magic.data(), buf.data(), 4);
    h.version = get<std::uint32_t>(buf.data() + 4);
    h.dtype = buf[8];
    h.normalized = buf[9];
    h.dim = get<std::uint32_t>(buf.data() + 16);
    h.count = get<std::uint64_t>(buf.data() + 24);
    for (std::size_t i = 0; i < h.extra.size(); ++i) {
        h.extra[i] = get<std::uint64_t>(buf.data() + 32 + 8 * i);
    }
    return h;
}

inline void
write_header(std::ostream& out, const FileHeader& h) {
    const auto buf = encode_header(h);
    out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
}

/// Reads and validates magic and version. Dimension and payload checks are left
/// to the caller, who knows the element size.
inline FileHeader
read_header(std::istream& in, std::string_view expected_magic, const std::string& source) {
    std::array<unsigned char, kHeaderBytes> buf{};
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (in.gcount() < 4 ||
        std::memcmp(buf.data(), expected_magic.data(), 4) != 0) {
        throw FormatError(FormatErrorKind::kBadMagic,
                          source + ": expected magic \"" + std::string(expected_magic) + "\"");
    }
    if (static_cast<std::size_t>(in.gcount()) < kHeaderBytes) {
        throw FormatError(FormatErrorKind::kTruncated, source + ": header shorter than 64 bytes");
    }
    FileHeader h = decode_header(buf);
    if (h.version != kVersion) {
        throw FormatError(FormatErrorKind::kUnsupportedVersion,
                          source + ": version " + std::to_string(h.version));
    }
    return h;
}

/// count * dim * elem_bytes, or an overflow error when it does not fit.
inline std::uint64_t
checked_payload_bytes(std::uint64_t count, std::uint64_t dim, std::uint64_t elem_bytes,
                      const std::string& source) {
    constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
    if (dim != 0 && count > kMax / dim) {
        throw FormatError(FormatErrorKind::kOverflow, source + ": count*dim overflows");
    }
    const std::uint64_t elems = count * dim;
    if (elem_bytes != 0 && elems > kMax / elem_bytes) {
        throw FormatError(FormatErrorKind::kOverflow, source + ": payload size overflows");
    }
    // an istream cannot address more than a signed 64-bit offset
    if (elems * elem_bytes > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
        throw FormatError(FormatErrorKind::kOverflow, source + ": payload size overflows");
    }
    return elems * elem_bytes;
}

/// Bytes left between the current read position and end of stream.
inline std::uint64_t
remaining_bytes(std::istream& in) {
    const auto here = in.tellg();
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    in.seekg(here);
    return static_cast<std::uint64_t>(end - here);
}

template <typename T>
inline void
read_exact(std::istream& in, std::span<T> dst, const std::string& source) {
    const auto bytes = static_cast<std::streamsize>(dst.size_bytes());
    in.read(reinterpret_cast<char*>(dst.data()), bytes);
    if (in.gcount() != bytes) {
        throw FormatError(FormatErrorKind::kTruncated, source + ": payload ends early");
    }
}

template <typename T>
inline void
write_span(std::ostream& out, std::span<const T> src) {
    out.write(reinterpret_cast<const char*>(src.data()), static_cast<std::streamsize>(src.size_bytes()));
}

inline std::ifstream
open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(FormatErrorKind::kIo, path + ": cannot open for reading");
    }
    return in;
}

inline std::ofstream
open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError(FormatErrorKind::kIo, path + ": cannot open for writing");
    }
    return out;
}

inline void
finish_output(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) {
        throw FormatError(FormatErrorKind::kIo, path + ": write failed");
    }
}

}  // namespace qirat::format
