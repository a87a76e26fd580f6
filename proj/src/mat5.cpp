#include "vibimg/mat5.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "vibimg/error.hpp"

namespace vibimg {
namespace {

// Data element types.
enum : std::uint32_t {
    miINT8 = 1,
    miUINT8 = 2,
    miINT16 = 3,
    miUINT16 = 4,
    miINT32 = 5,
    miUINT32 = 6,
    miSINGLE = 7,
    miDOUBLE = 9,
    miINT64 = 12,
    miUINT64 = 13,
    miMATRIX = 14,
    miCOMPRESSED = 15,
};

constexpr std::uint32_t mxDOUBLE_CLASS = 6;
constexpr std::uint32_t kComplexFlag = 0x0800;
constexpr std::size_t kHeaderSize = 128;

const char* class_name(std::uint32_t cls) {
    static const char* names[] = {"unknown", "cell",  "struct", "object", "char",  "sparse",
                                  "double",  "single", "int8",  "uint8",  "int16", "uint16",
                                  "int32",   "uint32", "int64", "uint64"};
    return cls < std::size(names) ? names[cls] : "unknown";
}

std::size_t element_width(std::uint32_t type) {
    switch (type) {
    case miINT8:
    case miUINT8: return 1;
    case miINT16:
    case miUINT16: return 2;
    case miINT32:
    case miUINT32:
    case miSINGLE: return 4;
    case miDOUBLE:
    case miINT64:
    case miUINT64: return 8;
    default: return 0;
    }
}

/// Byte-order aware reads over an immutable buffer.
class Bytes {
public:
    Bytes(std::span<const std::byte> data, bool big_endian) : data_(data), big_(big_endian) {}

    std::size_t size() const { return data_.size(); }
    std::span<const std::byte> sub(std::size_t off, std::size_t n) const { return data_.subspan(off, n); }
    bool big_endian() const { return big_; }

    template <typename T>
    T load(std::size_t off) const {
        std::array<std::byte, sizeof(T)> raw;
        std::memcpy(raw.data(), data_.data() + off, sizeof(T));
        if (big_ != (std::endian::native == std::endian::big)) {
            std::reverse(raw.begin(), raw.end());
        }
        return std::bit_cast<T>(raw);
    }

private:
    std::span<const std::byte> data_;
    bool big_;
};

struct Element {
    std::uint32_t type = 0;
    std::span<const std::byte> payload;
    std::size_t next = 0;  // offset of the following element
};

/// Reads the element tag at `off`, handling the 4-byte small element format.
Element read_element(const Bytes& in, std::size_t off) {
    if (in.size() - off < 8) {
        throw Error(ErrorCode::TruncatedElement, "element tag at offset " + std::to_string(off) + " is cut short");
    }
    Element el;
    const auto first = in.load<std::uint32_t>(off);
    if ((first >> 16) != 0) {
        el.type = first & 0xFFFFu;
        const std::size_t n = first >> 16;
        if (n > 4) {
            throw Error(ErrorCode::TruncatedElement, "small element declares " + std::to_string(n) + " bytes");
        }
        el.payload = in.sub(off + 4, n);
        el.next = off + 8;
        return el;
    }
    el.type = first;
    const std::size_t n = in.load<std::uint32_t>(off + 4);
    if (n > in.size() - off - 8) {
        throw Error(ErrorCode::TruncatedElement, "element at offset " + std::to_string(off) + " declares " +
                                                     std::to_string(n) + " bytes, " +
                                                     std::to_string(in.size() - off - 8) + " remain");
    }
    el.payload = in.sub(off + 8, n);
    std::size_t advance = 8 + n;
    if (el.type != miCOMPRESSED) advance = (advance + 7) & ~std::size_t{7};
    el.next = std::min(off + advance, in.size());
    return el;
}

std::vector<double> decode_numeric(const Bytes& in, const Element& el) {
    const std::size_t width = element_width(el.type);
    if (width == 0) {
        throw Error(ErrorCode::TruncatedElement, "unexpected data type " + std::to_string(el.type) + " in real part");
    }
    const Bytes view(el.payload, in.big_endian());
    const std::size_t count = el.payload.size() / width;
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t o = i * width;
        switch (el.type) {
        case miINT8: out[i] = view.load<std::int8_t>(o); break;
        case miUINT8: out[i] = view.load<std::uint8_t>(o); break;
        case miINT16: out[i] = view.load<std::int16_t>(o); break;
        case miUINT16: out[i] = view.load<std::uint16_t>(o); break;
        case miINT32: out[i] = view.load<std::int32_t>(o); break;
        case miUINT32: out[i] = view.load<std::uint32_t>(o); break;
        case miSINGLE: out[i] = view.load<float>(o); break;
        case miDOUBLE: out[i] = view.load<double>(o); break;
        case miINT64: out[i] = static_cast<double>(view.load<std::int64_t>(o)); break;
        case miUINT64: out[i] = static_cast<double>(view.load<std::uint64_t>(o)); break;
        }
    }
    return out;
}

std::vector<std::byte> inflate_payload(std::span<const std::byte> compressed) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw Error(ErrorCode::DecompressFailure, "inflateInit failed");
    std::vector<std::byte> out;
    std::array<std::byte, 1 << 15> chunk;
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            const std::string msg = zs.msg ? zs.msg : "zlib error " + std::to_string(rc);
            inflateEnd(&zs);
            throw Error(ErrorCode::DecompressFailure, msg);
        }
        out.insert(out.end(), chunk.begin(), chunk.begin() + (chunk.size() - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw Error(ErrorCode::DecompressFailure, "compressed stream ends before its terminator");
        }
    }
    inflateEnd(&zs);
    return out;
}

void parse_matrix(const Bytes& in, const Element& matrix, Mat5Contents& out) {
    if (matrix.payload.empty()) return;
    const Bytes body(matrix.payload, in.big_endian());

    const Element flags = read_element(body, 0);
    if (flags.payload.size() < 8) throw Error(ErrorCode::TruncatedElement, "array flags shorter than 8 bytes");
    const auto flag_word = Bytes(flags.payload, in.big_endian()).load<std::uint32_t>(0);
    const std::uint32_t cls = flag_word & 0xFFu;

    const Element dims_el = read_element(body, flags.next);
    const Bytes dims_view(dims_el.payload, in.big_endian());
    std::vector<std::size_t> dims;
    std::size_t count = 1;
    for (std::size_t o = 0; o + 4 <= dims_el.payload.size(); o += 4) {
        const auto d = dims_view.load<std::int32_t>(o);
        if (d < 0) throw Error(ErrorCode::TruncatedElement, "negative dimension");
        dims.push_back(static_cast<std::size_t>(d));
        count *= static_cast<std::size_t>(d);
    }

    const Element name_el = read_element(body, dims_el.next);
    std::string name(reinterpret_cast<const char*>(name_el.payload.data()), name_el.payload.size());

    if (cls != mxDOUBLE_CLASS) {
        out.warnings.push_back("variable '" + name + "': class " + class_name(cls) + " is not supported, skipped");
        return;
    }
    if (flag_word & kComplexFlag) {
        out.warnings.push_back("variable '" + name + "': complex data is not supported, skipped");
        return;
    }

    MatArray arr;
    arr.dims = std::move(dims);
    if (count > 0) {
        const Element real = read_element(body, name_el.next);
        arr.data = decode_numeric(body, real);
        if (arr.data.size() != count) {
            throw Error(ErrorCode::TruncatedElement, "variable '" + name + "' holds " +
                                                         std::to_string(arr.data.size()) + " values, dims require " +
                                                         std::to_string(count));
        }
    }
    out.variables.insert_or_assign(std::move(name), std::move(arr));
}

void parse_elements(const Bytes& in, std::size_t off, Mat5Contents& out) {
    while (off < in.size()) {
        const Element el = read_element(in, off);
        if (el.type == miMATRIX) {
            parse_matrix(in, el, out);
        } else if (el.type == miCOMPRESSED) {
            const auto inflated = inflate_payload(el.payload);
            parse_elements(Bytes(inflated, in.big_endian()), 0, out);
        } else {
            out.warnings.push_back("top-level element of type " + std::to_string(el.type) + " skipped");
        }
        off = el.next;
    }
}

} // namespace

Mat5Contents read_mat5(std::span<const std::byte> bytes) {
    // A Level-5 file starts with descriptive text; a zero in the first four
    // bytes marks a Level-4 file or no header at all.
    if (bytes.size() < 4 || std::any_of(bytes.begin(), bytes.begin() + 4, [](std::byte b) { return b == std::byte{0}; })) {
        throw Error(ErrorCode::BadMagic, "missing descriptive header text");
    }
    if (bytes.size() < kHeaderSize) {
        throw Error(ErrorCode::TruncatedElement, "file is shorter than the 128-byte header");
    }
    const auto c0 = static_cast<char>(bytes[126]);
    const auto c1 = static_cast<char>(bytes[127]);
    bool big_endian;
    if (c0 == 'I' && c1 == 'M') {
        big_endian = false;
    } else if (c0 == 'M' && c1 == 'I') {
        big_endian = true;
    } else {
        throw Error(ErrorCode::BadMagic, "endian indicator is neither 'IM' nor 'MI'");
    }
    const Bytes in(bytes, big_endian);
    const auto version = in.load<std::uint16_t>(124);
    if (version != 0x0100) {
        throw Error(ErrorCode::UnsupportedVersion, "header version " + std::to_string(version));
    }
    Mat5Contents out;
    parse_elements(in, kHeaderSize, out);
    return out;
}

Mat5Contents read_mat5_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return read_mat5(std::as_bytes(std::span(raw)));
}

} // namespace vibimg
