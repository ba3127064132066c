#include "sere/tensor_file.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sere/errors.hpp"

namespace sere {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b, 4);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("tensor file truncated");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Matrix& m) {
    out.write("SERE", 4);
    put_u32(out, kTensorVersion);
    put_u32(out, static_cast<uint32_t>(m.rows()));
    put_u32(out, static_cast<uint32_t>(m.cols()));
    for (double v : m.data()) {
        if (!std::isfinite(v)) throw ValidationError("tensor payload contains non-finite value");
        float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

Matrix read_tensor(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SERE", 4) != 0) throw FormatError("bad tensor magic");
    uint32_t version = get_u32(in);
    if (version != kTensorVersion) {
        throw FormatError("unsupported tensor version " + std::to_string(version));
    }
    uint32_t rows = get_u32(in);
    uint32_t cols = get_u32(in);

    Matrix m(static_cast<int>(rows), static_cast<int>(cols));
    for (double& v : m.data()) {
        uint32_t bits = get_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f)) throw ValidationError("tensor payload contains non-finite value");
        v = static_cast<double>(f);
    }
    in.peek();
    if (!in.eof()) throw FormatError("tensor file has trailing bytes");
    return m;
}

void save_tensor(const std::string& path, const Matrix& m) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open for writing: " + tmp);
        write_tensor(out, m);
        if (!out) throw FormatError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Matrix load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open tensor file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return read_tensor(buf);
}

}  // namespace sere
