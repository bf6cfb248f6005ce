#pragma once

// File formats: the binary matrix container, IDX image archives, PGM
// images, and CSV/text helpers. All writes go through a temp file plus
// rename so a crash never leaves a half-written artifact, and all numeric
// text uses shortest round-trip formatting so re-runs are byte-identical.

#include "mdnmf/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mdnmf {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_io(bool ok, const std::string& msg) {
  if (!ok) throw IoError(msg);
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u32_be(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::string& out, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::string& data;
  size_t pos = 0;
  const std::string path;

  void need(size_t n) const {
    check_io(pos + n <= data.size(), path + ": truncated file");
  }
  std::uint16_t u16_le() {
    need(2);
    const auto lo = static_cast<unsigned char>(data[pos++]);
    const auto hi = static_cast<unsigned char>(data[pos++]);
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  std::uint32_t u32_le() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
    return v;
  }
  std::uint32_t u32_be() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v = (v << 8) | static_cast<unsigned char>(data[pos++]);
    return v;
  }
  double f64_le() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  unsigned char byte() {
    need(1);
    return static_cast<unsigned char>(data[pos++]);
  }
};

}  // namespace detail

/// Writes `payload` atomically: temp file in the same directory, then rename.
inline void atomic_write(const std::filesystem::path& path, const std::string& payload) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    check_io(out.good(), "cannot open for writing: " + tmp.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    check_io(out.good(), "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  check_io(!ec, "rename failed: " + path.string() + " (" + ec.message() + ")");
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check_io(in.good(), "cannot open: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  check_io(in.good() || in.eof(), "read failed: " + path.string());
  return buf.str();
}

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---- matrix container: "NMF1", u32 LE rows, u32 LE cols, f64 LE column-major

inline std::string encode_matrix(const Matrix& m) {
  std::string out;
  out.reserve(12 + static_cast<size_t>(m.size()) * 8);
  out += "NMF1";
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.cols()));
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) detail::put_f64_le(out, m(i, j));
  return out;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
  atomic_write(path, encode_matrix(m));
}

inline Matrix decode_matrix(const std::string& bytes, const std::string& name) {
  detail::ByteReader r{bytes, 0, name};
  r.need(4);
  check_io(bytes.compare(0, 4, "NMF1") == 0, name + ": bad magic, expected NMF1");
  r.pos = 4;
  const auto rows = static_cast<Index>(r.u32_le());
  const auto cols = static_cast<Index>(r.u32_le());
  r.need(static_cast<size_t>(rows) * static_cast<size_t>(cols) * 8);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = r.f64_le();
  check_io(r.pos == bytes.size(), name + ": trailing bytes after matrix payload");
  return m;
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  return decode_matrix(read_file(path), path.string());
}

// ---- IDX image archives (magic 0x00000803, big-endian dims, u8 pixels)
// Images land one per column, flattened in row-major reading order and
// scaled to [0, 1].

inline Matrix read_idx_images(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  detail::ByteReader r{bytes, 0, path.string()};
  const std::uint32_t magic = r.u32_be();
  check_io(magic == 0x00000803u, path.string() + ": bad IDX magic for u8 rank-3 data");
  const auto count = static_cast<Index>(r.u32_be());
  const auto rows = static_cast<Index>(r.u32_be());
  const auto cols = static_cast<Index>(r.u32_be());
  r.need(static_cast<size_t>(count) * static_cast<size_t>(rows) * static_cast<size_t>(cols));
  Matrix m(rows * cols, count);
  for (Index k = 0; k < count; ++k)
    for (Index p = 0; p < rows * cols; ++p)
      m(p, k) = static_cast<double>(r.byte()) / 255.0;
  check_io(r.pos == bytes.size(), path.string() + ": trailing bytes after pixel payload");
  return m;
}

inline void write_idx_images(const std::filesystem::path& path, const Matrix& images,
                             Index rows, Index cols) {
  check_dims(rows > 0 && cols > 0 && images.rows() == rows * cols,
             "image matrix rows must equal rows*cols");
  std::string out;
  out.reserve(16 + static_cast<size_t>(images.size()));
  detail::put_u32_be(out, 0x00000803u);
  detail::put_u32_be(out, static_cast<std::uint32_t>(images.cols()));
  detail::put_u32_be(out, static_cast<std::uint32_t>(rows));
  detail::put_u32_be(out, static_cast<std::uint32_t>(cols));
  for (Index k = 0; k < images.cols(); ++k) {
    for (Index p = 0; p < images.rows(); ++p) {
      const double v = std::clamp(images(p, k), 0.0, 1.0);
      out.push_back(static_cast<char>(std::lround(v * 255.0)));
    }
  }
  atomic_write(path, out);
}

// ---- PGM (P5 binary, 8-bit), one image per file

inline void write_pgm(const std::filesystem::path& path, const Matrix& image) {
  check_dims(image.rows() > 0 && image.cols() > 0, "pgm image must be non-empty");
  std::string out = "P5\n" + std::to_string(image.cols()) + " " +
                    std::to_string(image.rows()) + "\n255\n";
  for (Index i = 0; i < image.rows(); ++i) {
    for (Index j = 0; j < image.cols(); ++j) {
      const double v = std::clamp(image(i, j), 0.0, 1.0);
      out.push_back(static_cast<char>(std::lround(v * 255.0)));
    }
  }
  atomic_write(path, out);
}

inline Matrix read_pgm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  size_t pos = 0;
  auto token = [&]() -> std::string {
    // whitespace-separated header fields; '#' starts a comment line
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    check_io(pos > start, path.string() + ": truncated PGM header");
    return bytes.substr(start, pos - start);
  };
  check_io(token() == "P5", path.string() + ": only binary P5 PGM is supported");
  const long cols = std::stol(token());
  const long rows = std::stol(token());
  const long maxval = std::stol(token());
  check_io(cols > 0 && rows > 0, path.string() + ": bad PGM dimensions");
  check_io(maxval > 0 && maxval < 256, path.string() + ": only 8-bit PGM is supported");
  ++pos;  // single whitespace byte after maxval
  check_io(pos + static_cast<size_t>(rows) * static_cast<size_t>(cols) <= bytes.size(),
           path.string() + ": truncated PGM pixels");
  Matrix image(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j)
      image(i, j) = static_cast<double>(static_cast<unsigned char>(bytes[pos++])) /
                    static_cast<double>(maxval);
  return image;
}

/// Loads every .pgm in a directory (sorted by filename) as flattened columns.
inline Matrix read_pgm_directory(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  check_io(fs::is_directory(dir), dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      files.push_back(entry.path());
  }
  check_io(!files.empty(), dir.string() + ": no .pgm files found");
  std::sort(files.begin(), files.end());
  Matrix out;
  for (size_t k = 0; k < files.size(); ++k) {
    const Matrix img = read_pgm(files[k]);
    if (k == 0) out.resize(img.size(), static_cast<Index>(files.size()));
    check_io(img.size() == out.rows(), files[k].string() + ": image size differs from the first image");
    // flatten in row-major reading order, matching the IDX convention
    for (Index i = 0; i < img.rows(); ++i)
      for (Index j = 0; j < img.cols(); ++j)
        out(i * img.cols() + j, static_cast<Index>(k)) = img(i, j);
  }
  return out;
}

// ---- CSV

inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      out.push_back('"');
      for (char c : f) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
      }
      out.push_back('"');
    } else {
      out += f;
    }
  }
  out.push_back('\n');
  return out;
}

}  // namespace mdnmf
