#include "heml/hseg.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "heml/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "HSEG I/O assumes a little-endian host");

namespace heml {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'E', 'G'};
constexpr std::uint16_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError(std::string("HSEG: truncated while reading ") + what);
  return value;
}

}  // namespace

void save_hseg(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("HSEG: cannot open for writing: " + path.string());

  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(data.size()));
  write_pod(out, static_cast<std::uint32_t>(data.dim()));
  out.write(reinterpret_cast<const char*>(data.features.data()),
            static_cast<std::streamsize>(sizeof(float)) * data.size() * data.dim());
  out.write(reinterpret_cast<const char*>(data.masks.data()),
            static_cast<std::streamsize>(data.size()) * data.dim());
  out.write(reinterpret_cast<const char*>(data.labels.data()),
            static_cast<std::streamsize>(sizeof(std::int32_t)) * data.size());
  if (!out) throw FormatError("HSEG: write failed: " + path.string());
}

Dataset load_hseg(const std::filesystem::path& path,
                  const std::string& segment_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("HSEG: cannot open: " + path.string());

  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("HSEG: bad magic in " + path.string());
  }
  const auto version = read_pod<std::uint16_t>(in, "version");
  if (version != kVersion) {
    throw FormatError("HSEG: unsupported version " + std::to_string(version) +
                      " in " + path.string());
  }
  const auto n = read_pod<std::uint32_t>(in, "sample count");
  const auto dim = read_pod<std::uint32_t>(in, "dim");

  // Validate the declared sizes against the actual file length before
  // allocating anything.
  const std::uint64_t header_bytes = sizeof(kMagic) + sizeof(kVersion) + 8;
  const std::uint64_t payload = static_cast<std::uint64_t>(n) * dim * 5 +
                                static_cast<std::uint64_t>(n) * 4;
  std::error_code ec;
  const auto actual = std::filesystem::file_size(path, ec);
  if (ec || actual != header_bytes + payload) {
    throw FormatError("HSEG: file length does not match header in " +
                      path.string());
  }

  Dataset data;
  data.segment_id = segment_id;
  data.features.resize(n, dim);
  data.masks.resize(n, dim);
  data.labels.resize(n);

  const std::streamsize feat_bytes =
      static_cast<std::streamsize>(sizeof(float)) * n * dim;
  in.read(reinterpret_cast<char*>(data.features.data()), feat_bytes);
  in.read(reinterpret_cast<char*>(data.masks.data()),
          static_cast<std::streamsize>(n) * dim);
  in.read(reinterpret_cast<char*>(data.labels.data()),
          static_cast<std::streamsize>(sizeof(std::int32_t)) * n);
  if (!in) throw FormatError("HSEG: truncated payload in " + path.string());

  if (!data.features.allFinite()) {
    throw FormatError("HSEG: non-finite feature in " + path.string());
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) {
      if (data.masks(i, j) > 1) {
        throw FormatError("HSEG: mask byte out of range in " + path.string());
      }
    }
  }
  return data;
}

}  // namespace heml
