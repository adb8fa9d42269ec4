#include "msdet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace msdet::checkpoint {

namespace {

constexpr char kMagic[4] = {'S', 'S', '4', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void write_floats(std::ostream& os, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    for (float f : v) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        write_u32(os, bits);
    }
}

void read_floats(std::istream& is, std::vector<float>& v) {
    for (float& f : v) {
        std::uint32_t bits = read_u32(is);
        std::memcpy(&f, &bits, 4);
    }
}

}  // namespace

void save(const ParamStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path +
                                      " for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(store.all().size()));
    for (const auto& p : store.all()) {
        write_u32(os, static_cast<std::uint32_t>(p->name.size()));
        os.write(p->name.data(), std::streamsize(p->name.size()));
        write_u32(os, 4);  // rank: shapes are stored as full rank-4
        write_u32(os, static_cast<std::uint32_t>(p->shape.n));
        write_u32(os, static_cast<std::uint32_t>(p->shape.c));
        write_u32(os, static_cast<std::uint32_t>(p->shape.h));
        write_u32(os, static_cast<std::uint32_t>(p->shape.w));
        write_floats(os, p->value);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load(ParamStore& store, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(version));
    std::uint32_t count = read_u32(is);
    if (count != store.all().size())
        throw std::runtime_error(
            "checkpoint: file has " + std::to_string(count) +
            " entries, model has " + std::to_string(store.all().size()));

    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = read_u32(is);
        if (name_len > 4096)
            throw std::runtime_error("checkpoint: implausible name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated file");

        std::uint32_t rank = read_u32(is);
        if (rank != 4)
            throw std::runtime_error("checkpoint: entry " + name +
                                     " has rank " + std::to_string(rank));
        // read_u32 calls must be sequenced, so no inline constructor call
        int dn = int(read_u32(is));
        int dc = int(read_u32(is));
        int dh = int(read_u32(is));
        int dw = int(read_u32(is));
        Shape4 shape(dn, dc, dh, dw);

        Parameter* p = store.find(name);
        if (!p)
            throw std::runtime_error("checkpoint: unknown parameter " + name);
        if (p->shape != shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name +
                                     ": file " + shape.str() + ", model " +
                                     p->shape.str());
        read_floats(is, p->value);
    }
}

}  // namespace msdet::checkpoint
