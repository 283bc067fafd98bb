#include "tsn/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "tsn/error.hpp"

namespace tsn {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'N', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor, Payload payload) {
  if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) {
    throw FormatError("tensor rank " + std::to_string(tensor.rank()) + " does not fit the header");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(payload));
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  if (payload == Payload::F32) {
    out.reserve(out.size() + 4 * tensor.numel());
    for (double v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    out.reserve(out.size() + tensor.numel());
    for (double v : tensor.data()) {
      if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
        throw FormatError("u8 payload requires integers in [0, 255], got " + std::to_string(v));
      }
      out.push_back(static_cast<std::uint8_t>(v));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6) throw FormatError("tensor header truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic: expected \"TSNT\"");
  const std::uint8_t version = bytes[4];
  if (version != 1 && version != 2) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("rank must be at least 1");
  if (bytes.size() < 6 + 4 * rank) throw FormatError("dims truncated");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes.data() + 6 + 4 * i);
    if (shape[i] == 0) throw FormatError("dim " + std::to_string(i) + " is zero");
  }
  const std::size_t count = shape_numel(shape);
  const std::size_t offset = 6 + 4 * rank;
  const std::size_t elem = version == 1 ? 4 : 1;
  if (bytes.size() - offset != count * elem) {
    throw FormatError("payload size " + std::to_string(bytes.size() - offset) + " bytes, expected " +
                      std::to_string(count * elem));
  }
  std::vector<double> values(count);
  const std::uint8_t* p = bytes.data() + offset;
  if (version == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * i)));
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(p[i]);
  }
  return Tensor(std::move(shape), std::move(values));
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor, Payload payload) {
  const auto bytes = encode_tensor(tensor, payload);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tsn
