#include "cmiprune/npy.hpp"

#include "cmiprune/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <regex>
#include <sstream>
#include <unistd.h>

namespace cmiprune {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "\x93NUMPY";

template <typename T>
std::vector<T> copy_out(const NpyArray& a) {
  std::vector<T> out(a.count());
  if (!out.empty()) std::memcpy(out.data(), a.data.data(), out.size() * sizeof(T));
  return out;
}

template <typename T>
NpyArray copy_in(std::string descr, std::span<const T> values, std::vector<std::size_t> shape) {
  NpyArray a;
  a.descr = std::move(descr);
  a.shape = std::move(shape);
  require(a.count() == values.size(), ErrorCode::InvalidArgument,
          "NPY shape does not match the number of values");
  a.data.resize(values.size_bytes());
  if (!values.empty()) std::memcpy(a.data.data(), values.data(), values.size_bytes());
  return a;
}

std::string header_text(const NpyArray& a) {
  std::ostringstream s;
  s << "{'descr': '" << a.descr << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < a.shape.size(); ++i) {
    s << a.shape[i];
    if (a.shape.size() == 1 || i + 1 < a.shape.size()) s << ",";
    if (i + 1 < a.shape.size()) s << " ";
  }
  s << "), }";
  return s.str();
}

}  // namespace

std::size_t NpyArray::count() const noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t NpyArray::item_size() const {
  if (descr == "<f4") return 4;
  if (descr == "<f8" || descr == "<i8") return 8;
  raise(ErrorCode::HeaderMismatch, "unsupported NPY dtype '" + descr + "'");
}

std::vector<float> NpyArray::as_f32() const {
  require(descr == "<f4", ErrorCode::HeaderMismatch, "expected <f4, found " + descr);
  return copy_out<float>(*this);
}

std::vector<double> NpyArray::as_f64() const {
  if (descr == "<f4") {
    const auto f = copy_out<float>(*this);
    return {f.begin(), f.end()};
  }
  require(descr == "<f8", ErrorCode::HeaderMismatch, "expected a float array, found " + descr);
  return copy_out<double>(*this);
}

std::vector<std::int64_t> NpyArray::as_i64() const {
  require(descr == "<i8", ErrorCode::HeaderMismatch, "expected <i8, found " + descr);
  return copy_out<std::int64_t>(*this);
}

NpyArray NpyArray::from(std::span<const float> values, std::vector<std::size_t> shape) {
  return copy_in("<f4", values, std::move(shape));
}
NpyArray NpyArray::from(std::span<const double> values, std::vector<std::size_t> shape) {
  return copy_in("<f8", values, std::move(shape));
}
NpyArray NpyArray::from(std::span<const std::int64_t> values, std::vector<std::size_t> shape) {
  return copy_in("<i8", values, std::move(shape));
}

std::string encode_npy(const NpyArray& array) {
  require(array.data.size() == array.count() * array.item_size(), ErrorCode::InvalidArgument,
          "NPY payload size does not match its shape");
  std::string header = header_text(array);
  const std::size_t prefix = kMagic.size() + 2 + 2;
  const std::size_t total = (prefix + header.size() + 1 + 63) / 64 * 64;
  header.append(total - prefix - header.size() - 1, ' ');
  header.push_back('\n');
  require(header.size() <= 0xFFFF, ErrorCode::InvalidArgument, "NPY header too long");

  std::string out;
  out.reserve(total + array.data.size());
  out.append(kMagic);
  out.push_back('\x01');
  out.push_back('\x00');
  out.push_back(static_cast<char>(header.size() & 0xFF));
  out.push_back(static_cast<char>(header.size() >> 8));
  out.append(header);
  out.append(reinterpret_cast<const char*>(array.data.data()), array.data.size());
  return out;
}

NpyArray decode_npy(std::string_view bytes, std::string_view origin) {
  const std::string where(origin);
  require(bytes.size() >= 10 && bytes.substr(0, kMagic.size()) == kMagic,
          ErrorCode::HeaderMismatch, where + ": not an NPY file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) |
                 (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    require(bytes.size() >= 12, ErrorCode::HeaderMismatch, where + ": truncated NPY header");
    for (int i = 3; i >= 0; --i) {
      header_len = (header_len << 8) | static_cast<unsigned char>(bytes[8 + static_cast<std::size_t>(i)]);
    }
    offset = 12;
  } else {
    raise(ErrorCode::HeaderMismatch, where + ": unsupported NPY version " + std::to_string(major));
  }
  require(bytes.size() >= offset + header_len, ErrorCode::HeaderMismatch,
          where + ": truncated NPY header");
  const std::string header(bytes.substr(offset, header_len));

  static const std::regex descr_re(R"('descr'\s*:\s*'([^']*)')");
  static const std::regex fortran_re(R"('fortran_order'\s*:\s*(True|False))");
  static const std::regex shape_re(R"('shape'\s*:\s*\(([^)]*)\))");
  std::smatch m;
  NpyArray a;
  require(std::regex_search(header, m, descr_re), ErrorCode::HeaderMismatch,
          where + ": NPY header lacks descr");
  a.descr = m[1];
  (void)a.item_size();
  require(std::regex_search(header, m, fortran_re) && m[1] == "False", ErrorCode::HeaderMismatch,
          where + ": only C-order NPY arrays are supported");
  require(std::regex_search(header, m, shape_re), ErrorCode::HeaderMismatch,
          where + ": NPY header lacks shape");
  std::stringstream dims(m[1]);
  std::string item;
  while (std::getline(dims, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    try {
      a.shape.push_back(static_cast<std::size_t>(std::stoull(item.substr(first))));
    } catch (const std::exception&) {
      raise(ErrorCode::HeaderMismatch, where + ": malformed NPY shape");
    }
  }

  const std::size_t payload = a.count() * a.item_size();
  const std::size_t available = bytes.size() - offset - header_len;
  require(available >= payload, ErrorCode::TruncatedTensor,
          where + ": expected " + std::to_string(payload) + " data bytes, found " +
              std::to_string(available));
  a.data.resize(payload);
  if (payload > 0) std::memcpy(a.data.data(), bytes.data() + offset + header_len, payload);
  return a;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorCode::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    raise(ErrorCode::IoFailure, "cannot move " + tmp.string() + " into place");
  }
}

NpyArray read_npy(const std::filesystem::path& path) {
  return decode_npy(read_file(path), path.string());
}

void write_npy(const std::filesystem::path& path, const NpyArray& array) {
  write_file_atomic(path, encode_npy(array));
}

}  // namespace cmiprune
