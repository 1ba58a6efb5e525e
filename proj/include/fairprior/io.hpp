#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fairprior {
namespace io {

// ------------------------------------------------------------ tensor files
// Flat binary tensor container used inside dataset bundle directories.
// Layout (little-endian): magic "FPTNSR1\0", u8 dtype, u8 ndim, u16 reserved,
// i64 shape[ndim], then raw data.
enum class Dtype : uint8_t { f32 = 1, u8 = 2, i32 = 3 };

struct TensorBlob {
    Dtype dtype = Dtype::f32;
    std::vector<int64_t> shape;
    std::vector<uint8_t> raw;

    int64_t numel() const;
    const float* f32_ptr() const;
    const int32_t* i32_ptr() const;
};

void save_tensor_file(const std::string& path, const TensorBlob& blob);
TensorBlob load_tensor_file(const std::string& path);

TensorBlob blob_from_floats(const std::vector<float>& v, std::vector<int64_t> shape);
TensorBlob blob_from_ints(const std::vector<int32_t>& v, std::vector<int64_t> shape);

// -------------------------------------------------------------------- npy
struct NpyArray {
    std::string descr;  // e.g. "<f4", "|u1", "<i8"
    std::vector<int64_t> shape;
    std::vector<uint8_t> raw;

    int64_t numel() const;
    std::vector<float> as_floats() const;
    std::vector<int64_t> as_i64() const;
};

std::vector<uint8_t> encode_npy(const NpyArray& arr);
NpyArray decode_npy(const std::vector<uint8_t>& bytes);

// -------------------------------------------------------------------- npz
// Minimal zip container, enough for numpy .npz archives: reads stored and
// deflated entries, writes stored entries.
std::map<std::string, NpyArray> load_npz(const std::string& path);
void save_npz(const std::string& path, const std::map<std::string, NpyArray>& arrays);

// -------------------------------------------------------------------- idx
// The classic digit-corpus file format (images: magic 0x803, labels: 0x801).
void write_idx_images(const std::string& path, const std::vector<uint8_t>& pixels, int count,
                      int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<uint8_t>& labels);
std::vector<uint8_t> read_idx_images(const std::string& path, int& count, int& rows, int& cols);
std::vector<uint8_t> read_idx_labels(const std::string& path);

// -------------------------------------------------------------------- png
// 8-bit PNG writer; channels must be 1 (gray) or 3 (rgb). Row-major
// interleaved pixel data. Deterministic output bytes for fixed input.
void write_png(const std::string& path, const std::vector<uint8_t>& pixels, int width, int height,
               int channels);

// ------------------------------------------------------------------ files
std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace io
}  // namespace fairprior
