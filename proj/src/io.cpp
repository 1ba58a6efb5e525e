#include "fairprior/io.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "fairprior/errors.hpp"

namespace fairprior {
namespace io {

namespace {

size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f32: return 4;
        case Dtype::u8: return 1;
        case Dtype::i32: return 4;
    }
    throw IoError("unknown dtype code");
}

size_t npy_item_size(const std::string& descr) {
    if (descr == "<f4") return 4;
    if (descr == "<f8") return 8;
    if (descr == "|u1" || descr == "|b1") return 1;
    if (descr == "<i8") return 8;
    if (descr == "<i4") return 4;
    throw IoError("unsupported npy dtype: " + descr);
}

void put_u16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x & 0xff));
    v.push_back(static_cast<uint8_t>(x >> 8));
}

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>((x >> (8 * i)) & 0xff));
}

uint16_t get_u16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint32_t be32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    v.push_back(static_cast<uint8_t>(x & 0xff));
}

std::vector<uint8_t> inflate_raw(const uint8_t* src, size_t src_len, size_t dst_len) {
    std::vector<uint8_t> out(dst_len);
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK) throw IoError("inflateInit failed");
    zs.next_in = const_cast<uint8_t*>(src);
    zs.avail_in = static_cast<uInt>(src_len);
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(dst_len);
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw IntegrityError("deflate stream corrupt");
    return out;
}

}  // namespace

// ------------------------------------------------------------------ files

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const auto n = in.tellg();
    in.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!in) throw IoError("short read on " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on " + path);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

std::string read_text_file(const std::string& path) {
    auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

// ------------------------------------------------------------ tensor files

static constexpr char kTensorMagic[8] = {'F', 'P', 'T', 'N', 'S', 'R', '1', '\0'};

int64_t TensorBlob::numel() const {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

const float* TensorBlob::f32_ptr() const {
    if (dtype != Dtype::f32) throw IoError("tensor blob is not f32");
    return reinterpret_cast<const float*>(raw.data());
}

const int32_t* TensorBlob::i32_ptr() const {
    if (dtype != Dtype::i32) throw IoError("tensor blob is not i32");
    return reinterpret_cast<const int32_t*>(raw.data());
}

void save_tensor_file(const std::string& path, const TensorBlob& blob) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kTensorMagic, kTensorMagic + 8);
    out.push_back(static_cast<uint8_t>(blob.dtype));
    out.push_back(static_cast<uint8_t>(blob.shape.size()));
    out.push_back(0);
    out.push_back(0);
    for (int64_t d : blob.shape)
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((static_cast<uint64_t>(d) >> (8 * i)) & 0xff));
    if (blob.raw.size() != static_cast<size_t>(blob.numel()) * dtype_size(blob.dtype))
        throw IoError("tensor blob size mismatch");
    out.insert(out.end(), blob.raw.begin(), blob.raw.end());
    write_file(path, out);
}

TensorBlob load_tensor_file(const std::string& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kTensorMagic, 8) != 0)
        throw IntegrityError("bad tensor file magic in " + path);
    TensorBlob blob;
    blob.dtype = static_cast<Dtype>(bytes[8]);
    const int ndim = bytes[9];
    size_t off = 12;
    if (bytes.size() < off + static_cast<size_t>(ndim) * 8)
        throw IntegrityError("truncated tensor header in " + path);
    for (int i = 0; i < ndim; ++i) {
        uint64_t d = 0;
        for (int b = 0; b < 8; ++b) d |= static_cast<uint64_t>(bytes[off + b]) << (8 * b);
        blob.shape.push_back(static_cast<int64_t>(d));
        off += 8;
    }
    const size_t expect = static_cast<size_t>(blob.numel()) * dtype_size(blob.dtype);
    if (bytes.size() - off != expect)
        throw IntegrityError("tensor payload size mismatch in " + path);
    blob.raw.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
    return blob;
}

TensorBlob blob_from_floats(const std::vector<float>& v, std::vector<int64_t> shape) {
    TensorBlob b;
    b.dtype = Dtype::f32;
    b.shape = std::move(shape);
    b.raw.resize(v.size() * 4);
    std::memcpy(b.raw.data(), v.data(), b.raw.size());
    return b;
}

TensorBlob blob_from_ints(const std::vector<int32_t>& v, std::vector<int64_t> shape) {
    TensorBlob b;
    b.dtype = Dtype::i32;
    b.shape = std::move(shape);
    b.raw.resize(v.size() * 4);
    std::memcpy(b.raw.data(), v.data(), b.raw.size());
    return b;
}

// -------------------------------------------------------------------- npy

int64_t NpyArray::numel() const {
    int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<float> NpyArray::as_floats() const {
    const int64_t n = numel();
    std::vector<float> out(static_cast<size_t>(n));
    if (descr == "<f4") {
        std::memcpy(out.data(), raw.data(), static_cast<size_t>(n) * 4);
    } else if (descr == "<f8") {
        const double* p = reinterpret_cast<const double*>(raw.data());
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = static_cast<float>(p[i]);
    } else if (descr == "|u1" || descr == "|b1") {
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = static_cast<float>(raw[static_cast<size_t>(i)]);
    } else {
        throw IoError("npy as_floats: unsupported dtype " + descr);
    }
    return out;
}

std::vector<int64_t> NpyArray::as_i64() const {
    const int64_t n = numel();
    std::vector<int64_t> out(static_cast<size_t>(n));
    if (descr == "<i8") {
        std::memcpy(out.data(), raw.data(), static_cast<size_t>(n) * 8);
    } else if (descr == "<i4") {
        const int32_t* p = reinterpret_cast<const int32_t*>(raw.data());
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = p[i];
    } else if (descr == "|u1" || descr == "|b1") {
        for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = raw[static_cast<size_t>(i)];
    } else {
        throw IoError("npy as_i64: unsupported dtype " + descr);
    }
    return out;
}

std::vector<uint8_t> encode_npy(const NpyArray& arr) {
    std::string header = "{'descr': '" + arr.descr + "', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < arr.shape.size(); ++i) header += std::to_string(arr.shape[i]) + ", ";
    if (arr.shape.size() > 1) header.erase(header.size() - 1);  // tuple style: (a, b) vs (a,)
    header += "), }";
    // pad so that magic+2+2+header+\n is a multiple of 64
    size_t unpadded = 6 + 2 + 2 + header.size() + 1;
    size_t pad = (64 - unpadded % 64) % 64;
    header.append(pad, ' ');
    header += '\n';

    std::vector<uint8_t> out;
    const char magic[] = "\x93NUMPY";
    out.insert(out.end(), magic, magic + 6);
    out.push_back(1);
    out.push_back(0);
    put_u16(out, static_cast<uint16_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    if (arr.raw.size() != static_cast<size_t>(arr.numel()) * npy_item_size(arr.descr))
        throw IoError("npy payload size mismatch");
    out.insert(out.end(), arr.raw.begin(), arr.raw.end());
    return out;
}

NpyArray decode_npy(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0)
        throw IoError("not an npy payload");
    const int major = bytes[6];
    size_t header_len, header_off;
    if (major == 1) {
        header_len = get_u16(bytes.data() + 8);
        header_off = 10;
    } else {
        header_len = get_u32(bytes.data() + 8);
        header_off = 12;
    }
    if (bytes.size() < header_off + header_len) throw IoError("truncated npy header");
    const std::string header(bytes.begin() + static_cast<std::ptrdiff_t>(header_off),
                             bytes.begin() + static_cast<std::ptrdiff_t>(header_off + header_len));

    NpyArray arr;
    auto dpos = header.find("'descr'");
    if (dpos == std::string::npos) throw IoError("npy header missing descr");
    auto colon = header.find(':', dpos);
    auto v1 = header.find('\'', colon);
    auto v2 = header.find('\'', v1 + 1);
    arr.descr = header.substr(v1 + 1, v2 - v1 - 1);

    if (header.find("'fortran_order': True") != std::string::npos)
        throw IoError("fortran-ordered npy not supported");

    auto spos = header.find("'shape'");
    auto p1 = header.find('(', spos);
    auto p2 = header.find(')', p1);
    std::string tup = header.substr(p1 + 1, p2 - p1 - 1);
    size_t pos = 0;
    while (pos < tup.size()) {
        while (pos < tup.size() && (tup[pos] == ' ' || tup[pos] == ',')) ++pos;
        if (pos >= tup.size()) break;
        size_t end = pos;
        while (end < tup.size() && isdigit(static_cast<unsigned char>(tup[end]))) ++end;
        if (end > pos) arr.shape.push_back(std::stoll(tup.substr(pos, end - pos)));
        pos = end + 1;
    }

    arr.raw.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_off + header_len),
                   bytes.end());
    const size_t expect = static_cast<size_t>(arr.numel()) * npy_item_size(arr.descr);
    if (arr.raw.size() < expect) throw IoError("truncated npy payload");
    arr.raw.resize(expect);
    return arr;
}

// -------------------------------------------------------------------- npz

std::map<std::string, NpyArray> load_npz(const std::string& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 22) throw IoError("npz too small: " + path);

    // locate end-of-central-directory
    size_t eocd = std::string::npos;
    for (size_t i = bytes.size() - 22; i + 4 >= 4; --i) {
        if (bytes[i] == 0x50 && bytes[i + 1] == 0x4b && bytes[i + 2] == 0x05 && bytes[i + 3] == 0x06) {
            eocd = i;
            break;
        }
        if (i == 0) break;
    }
    if (eocd == std::string::npos) throw IoError("zip end record not found in " + path);
    const uint16_t entries = get_u16(bytes.data() + eocd + 10);
    uint32_t cd_off = get_u32(bytes.data() + eocd + 16);

    std::map<std::string, NpyArray> out;
    size_t p = cd_off;
    for (int e = 0; e < entries; ++e) {
        if (p + 46 > bytes.size() || get_u32(bytes.data() + p) != 0x02014b50)
            throw IoError("zip central directory corrupt in " + path);
        const uint16_t method = get_u16(bytes.data() + p + 10);
        const uint32_t crc = get_u32(bytes.data() + p + 16);
        const uint32_t csize = get_u32(bytes.data() + p + 20);
        const uint32_t usize = get_u32(bytes.data() + p + 24);
        const uint16_t nlen = get_u16(bytes.data() + p + 28);
        const uint16_t elen = get_u16(bytes.data() + p + 30);
        const uint16_t clen = get_u16(bytes.data() + p + 32);
        const uint32_t lho = get_u32(bytes.data() + p + 42);
        std::string name(reinterpret_cast<const char*>(bytes.data() + p + 46), nlen);
        p += 46u + nlen + elen + clen;

        // local header gives the actual data offset
        if (lho + 30 > bytes.size() || get_u32(bytes.data() + lho) != 0x04034b50)
            throw IoError("zip local header corrupt for " + name);
        const uint16_t lnlen = get_u16(bytes.data() + lho + 26);
        const uint16_t lelen = get_u16(bytes.data() + lho + 28);
        const size_t data_off = lho + 30u + lnlen + lelen;
        if (data_off + csize > bytes.size()) throw IoError("zip entry truncated: " + name);

        std::vector<uint8_t> payload;
        if (method == 0) {
            payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_off),
                           bytes.begin() + static_cast<std::ptrdiff_t>(data_off + csize));
        } else if (method == 8) {
            payload = inflate_raw(bytes.data() + data_off, csize, usize);
        } else {
            throw IoError("zip compression method " + std::to_string(method) + " unsupported");
        }
        const uint32_t got_crc =
            static_cast<uint32_t>(crc32(0, payload.data(), static_cast<uInt>(payload.size())));
        if (got_crc != crc) throw IntegrityError("zip crc mismatch for " + name);

        if (name.size() > 4 && name.substr(name.size() - 4) == ".npy")
            name = name.substr(0, name.size() - 4);
        // ignore non-npy members (the published archive carries a pickled
        // metadata dict we do not need)
        if (payload.size() >= 6 && std::memcmp(payload.data(), "\x93NUMPY", 6) == 0)
            out[name] = decode_npy(payload);
    }
    return out;
}

void save_npz(const std::string& path, const std::map<std::string, NpyArray>& arrays) {
    std::vector<uint8_t> out;
    struct CdEntry {
        std::string name;
        uint32_t crc, size, offset;
    };
    std::vector<CdEntry> cd;

    for (const auto& [key, arr] : arrays) {
        const std::string name = key + ".npy";
        const auto payload = encode_npy(arr);
        const uint32_t crc =
            static_cast<uint32_t>(crc32(0, payload.data(), static_cast<uInt>(payload.size())));
        const uint32_t off = static_cast<uint32_t>(out.size());
        put_u32(out, 0x04034b50);
        put_u16(out, 20);      // version needed
        put_u16(out, 0);       // flags
        put_u16(out, 0);       // method: stored
        put_u16(out, 0);       // mod time
        put_u16(out, 0x21);    // mod date
        put_u32(out, crc);
        put_u32(out, static_cast<uint32_t>(payload.size()));
        put_u32(out, static_cast<uint32_t>(payload.size()));
        put_u16(out, static_cast<uint16_t>(name.size()));
        put_u16(out, 0);
        out.insert(out.end(), name.begin(), name.end());
        out.insert(out.end(), payload.begin(), payload.end());
        cd.push_back({name, crc, static_cast<uint32_t>(payload.size()), off});
    }

    const uint32_t cd_off = static_cast<uint32_t>(out.size());
    for (const auto& e : cd) {
        put_u32(out, 0x02014b50);
        put_u16(out, 20);
        put_u16(out, 20);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0x21);
        put_u32(out, e.crc);
        put_u32(out, e.size);
        put_u32(out, e.size);
        put_u16(out, static_cast<uint16_t>(e.name.size()));
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u16(out, 0);
        put_u32(out, 0);
        put_u32(out, e.offset);
        out.insert(out.end(), e.name.begin(), e.name.end());
    }
    const uint32_t cd_size = static_cast<uint32_t>(out.size()) - cd_off;
    put_u32(out, 0x06054b50);
    put_u16(out, 0);
    put_u16(out, 0);
    put_u16(out, static_cast<uint16_t>(cd.size()));
    put_u16(out, static_cast<uint16_t>(cd.size()));
    put_u32(out, cd_size);
    put_u32(out, cd_off);
    put_u16(out, 0);
    write_file(path, out);
}

// -------------------------------------------------------------------- idx

void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels, int count,
                      int rows, int cols) {
    if (pixels.size() != static_cast<size_t>(count) * rows * cols)
        throw IoError("idx image payload size mismatch");
    std::vector<uint8_t> out;
    put_be32(out, 0x00000803);
    put_be32(out, static_cast<uint32_t>(count));
    put_be32(out, static_cast<uint32_t>(rows));
    put_be32(out, static_cast<uint32_t>(cols));
    out.insert(out.end(), pixels.begin(), pixels.end());
    write_file(path, out);
}

void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels) {
    std::vector<uint8_t> out;
    put_be32(out, 0x00000801);
    put_be32(out, static_cast<uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    write_file(path, out);
}

std::vector<uint8_t> read_idx_images(const std::string& path, int& count, int& rows, int& cols) {
    auto bytes = read_file(path);
    if (bytes.size() < 16 || be32(bytes.data()) != 0x00000803)
        throw IoError("not an idx image file: " + path);
    count = static_cast<int>(be32(bytes.data() + 4));
    rows = static_cast<int>(be32(bytes.data() + 8));
    cols = static_cast<int>(be32(bytes.data() + 12));
    const size_t expect = 16u + static_cast<size_t>(count) * rows * cols;
    if (bytes.size() < expect) throw IntegrityError("idx image file truncated: " + path);
    return std::vector<uint8_t>(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(expect));
}

std::vector<uint8_t> read_idx_labels(const std::string& path) {
    auto bytes = read_file(path);
    if (bytes.size() < 8 || be32(bytes.data()) != 0x00000801)
        throw IoError("not an idx label file: " + path);
    const size_t count = be32(bytes.data() + 4);
    if (bytes.size() < 8 + count) throw IntegrityError("idx label file truncated: " + path);
    return std::vector<uint8_t>(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count));
}

// -------------------------------------------------------------------- png

namespace {

void png_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    out.insert(out.end(), body.begin(), body.end());
    put_be32(out, static_cast<uint32_t>(crc32(0, body.data(), static_cast<uInt>(body.size()))));
}

}  // namespace

void write_png(const std::string& path, const std::vector<uint8_t>& pixels, int width, int height,
               int channels) {
    if (channels != 1 && channels != 3) throw IoError("png writer supports 1 or 3 channels");
    if (pixels.size() != static_cast<size_t>(width) * height * channels)
        throw IoError("png pixel buffer size mismatch");

    std::vector<uint8_t> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(width));
    put_be32(ihdr, static_cast<uint32_t>(height));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);                // gray or rgb
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    png_chunk(out, "IHDR", ihdr);

    // filter byte 0 per scanline, then zlib at fixed level for deterministic bytes
    std::vector<uint8_t> scan;
    scan.reserve(static_cast<size_t>(height) * (1 + static_cast<size_t>(width) * channels));
    for (int y = 0; y < height; ++y) {
        scan.push_back(0);
        const uint8_t* row = pixels.data() + static_cast<size_t>(y) * width * channels;
        scan.insert(scan.end(), row, row + static_cast<size_t>(width) * channels);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(scan.size()));
    std::vector<uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, scan.data(), static_cast<uLong>(scan.size()), 6) != Z_OK)
        throw IoError("png compression failed");
    comp.resize(comp_len);
    png_chunk(out, "IDAT", comp);
    png_chunk(out, "IEND", {});
    write_file(path, out);
}

}  // namespace io
}  // namespace fairprior
