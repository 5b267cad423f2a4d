#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "salite/ops/resize.hpp"
#include "salite/tensor.hpp"

namespace salite {

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed PNM payload; `offset` is the byte where parsing stopped.
class ParseError : public IoError {
 public:
  ParseError(const std::string& path, std::size_t offset, const std::string& what)
      : IoError(path + ": byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Manifest syntax or content error, tagged with the 1-based line number.
class ManifestError : public std::invalid_argument {
 public:
  ManifestError(const std::string& path, int line, const std::string& what)
      : std::invalid_argument(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// 8-bit interleaved raster.
struct Image8 {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(int y, int x, int c = 0) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c = 0) const { return pixels[(std::size_t(y) * width + x) * channels + c]; }
};

inline constexpr double kImageMean[3] = {0.485, 0.456, 0.406};
inline constexpr double kImageStd[3] = {0.229, 0.224, 0.225};

namespace detail {

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::string& header, const std::vector<std::uint8_t>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

class PnmHeaderReader {
 public:
  PnmHeaderReader(const std::vector<std::uint8_t>& b, std::string path) : b_(b), path_(std::move(path)) {}

  int field(const char* what) {
    skip_space_and_comments();
    if (pos_ >= b_.size()) fail(std::string("unexpected end of header reading ") + what);
    if (b_[pos_] < '0' || b_[pos_] > '9') fail(std::string("expected ") + what);
    long v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > (1 << 24)) fail(std::string(what) + " too large");
    }
    return static_cast<int>(v);
  }

  // exactly one whitespace byte separates maxval from the raster
  void end_of_header() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail("expected single whitespace after maxval");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, pos_, what); }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#')
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      else if (std::isspace(b_[pos_]))
        ++pos_;
      else
        break;
    }
  }

  const std::vector<std::uint8_t>& b_;
  std::string path_;
  std::size_t pos_ = 2;
};

}  // namespace detail

/// Binary PGM (P5) or PPM (P6), maxval 255.
inline Image8 read_pnm(const std::filesystem::path& path) {
  const auto bytes = detail::read_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError(path.string(), 0, "not a binary PGM/PPM (expected P5 or P6)");
  detail::PnmHeaderReader rd(bytes, path.string());
  Image8 img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  img.width = rd.field("width");
  img.height = rd.field("height");
  const std::size_t maxval_at = rd.pos();
  const int maxval = rd.field("maxval");
  if (img.width < 1 || img.height < 1) rd.fail("zero image extent");
  if (maxval != 255) throw ParseError(path.string(), maxval_at, "unsupported maxval " + std::to_string(maxval));
  rd.end_of_header();
  const std::size_t need = std::size_t(img.width) * img.height * img.channels;
  if (bytes.size() - rd.pos() < need)
    throw ParseError(path.string(), bytes.size(),
                     "truncated raster: " + std::to_string(bytes.size() - rd.pos()) + " of " + std::to_string(need) + " bytes");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos()),
                    bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos() + need));
  return img;
}

inline void write_pnm(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  const std::string header = (img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  detail::write_bytes(path, header, img.pixels);
}

/// Nearest-neighbour sample positions: output i reads input floor(i * in / out).
inline std::vector<int> nearest_taps(int in, int out) {
  std::vector<int> t(out);
  for (int i = 0; i < out; ++i) t[i] = static_cast<int>(std::int64_t(i) * in / out);
  return t;
}

/// Raster -> [3,H,W] scaled to [0,1], resized to size x size (bilinear), ImageNet-normalized.
template <Real T = float>
Tensor<T> image_to_tensor(const Image8& img, int size) {
  const std::size_t h = img.height, w = img.width;
  std::vector<T> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i)
      v[c * h * w + i] = static_cast<T>(img.pixels[i * img.channels + (img.channels == 3 ? c : 0)] / 255.0);
  NoGradGuard ng;
  Tensor<T> t(Shape{1, 3, h, w}, std::move(v));
  if (int(h) != size || int(w) != size) t = resize_bilinear(t, size, size);
  auto d = t.mutable_data();
  const std::size_t plane = std::size_t(size) * size;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      d[c * plane + i] = static_cast<T>((d[c * plane + i] - kImageMean[c]) / kImageStd[c]);
  return Tensor<T>(Shape{3, std::size_t(size), std::size_t(size)}, std::vector<T>(d.begin(), d.end()));
}

template <Real T = float>
Tensor<T> load_image(const std::filesystem::path& path, int size = 224) {
  return image_to_tensor<T>(read_pnm(path), size);
}

/// Raster -> binary [1,size,size]: level >= 128 is foreground, nearest-neighbour resize.
template <Real T = float>
Tensor<T> mask_to_tensor(const Image8& img, int size) {
  const auto ty = nearest_taps(img.height, size), tx = nearest_taps(img.width, size);
  std::vector<T> v(std::size_t(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) v[std::size_t(y) * size + x] = img.at(ty[y], tx[x], 0) >= 128 ? T(1) : T(0);
  return Tensor<T>(Shape{1, std::size_t(size), std::size_t(size)}, std::move(v));
}

template <Real T = float>
Tensor<T> load_mask(const std::filesystem::path& path, int size = 224) {
  auto img = read_pnm(path);
  if (img.channels != 1) throw ParseError(path.string(), 1, "mask must be a P5 greymap");
  return mask_to_tensor<T>(img, size);
}

/// Saliency level for one value: round(255 s), half up, clamped.
inline std::uint8_t map_level(double s) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(255.0 * s + 0.5), 0.0, 255.0));
}

/// S with H*W values (any leading unit dims) -> P5.
template <Real T>
void save_map(const Tensor<T>& s, const std::filesystem::path& path) {
  if (s.rank() < 2 || s.numel() != s.dim(s.rank() - 2) * s.dim(s.rank() - 1))
    throw DimensionError("save_map: expected a single-channel map, got " + to_string(s.shape()));
  Image8 img;
  img.height = static_cast<int>(s.dim(s.rank() - 2));
  img.width = static_cast<int>(s.dim(s.rank() - 1));
  img.channels = 1;
  img.pixels.resize(s.numel());
  for (std::size_t i = 0; i < s.numel(); ++i) img.pixels[i] = map_level(s[i]);
  write_pnm(path, img);
}

/// Map file -> values level/255 (no thresholding, no resize).
template <Real T = float>
Tensor<T> load_map(const std::filesystem::path& path) {
  auto img = read_pnm(path);
  if (img.channels != 1) throw ParseError(path.string(), 1, "saliency map must be a P5 greymap");
  std::vector<T> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(img.pixels[i] / 255.0);
  return Tensor<T>(Shape{1, std::size_t(img.height), std::size_t(img.width)}, std::move(v));
}

struct ManifestRow {
  std::filesystem::path image;
  std::filesystem::path mask;
};

struct DatasetManifest {
  std::string source;  // "# source: <tag>" line, else the manifest's directory name
  std::vector<ManifestRow> rows;

  std::size_t size() const { return rows.size(); }
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open manifest");
  const auto base = path.parent_path();
  DatasetManifest m;
  m.source = std::filesystem::absolute(path).parent_path().filename().string();
  std::set<std::string> seen;
  std::string line;
  int no = 0;
  auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p; };
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# source:", 0) == 0) {
      std::istringstream tag(line.substr(9));
      tag >> m.source;
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ManifestError(path.string(), no, "missing tab between image and mask paths");
    const std::string img = line.substr(0, tab), mask = line.substr(tab + 1);
    if (img.empty() || mask.empty() || mask.find('\t') != std::string::npos)
      throw ManifestError(path.string(), no, "expected exactly two non-empty fields");
    ManifestRow row{resolve(img), resolve(mask)};
    if (!seen.insert(row.image.lexically_normal().string()).second)
      throw ManifestError(path.string(), no, "duplicate image path " + img);
    m.rows.push_back(std::move(row));
  }
  return m;
}

/// Paths are written relative to the manifest's directory when they live below it.
inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ostringstream os;
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    auto r = p.lexically_relative(base);
    return (r.empty() || r.begin()->string() == "..") ? p.string() : r.string();
  };
  if (!m.source.empty()) os << "# source: " << m.source << '\n';
  for (const auto& r : m.rows) os << rel(r.image) << '\t' << rel(r.mask) << '\n';
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << os.str();
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace salite
