#include "dnres/image_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dnres {
namespace {

class PnmReader {
 public:
  explicit PnmReader(const std::string& bytes) : bytes_(bytes) {}

  std::string magic() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') throw FormatError("pnm: missing 'P' magic");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  // Header integers are separated by whitespace; '#' starts a comment.
  unsigned long header_int(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError(std::string("pnm: malformed header, expected ") + field);
    }
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<unsigned long>(bytes_[pos_] - '0');
      if (v > 1000000000UL) throw FormatError(std::string("pnm: ") + field + " out of range");
      ++pos_;
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from binary data.
  void end_of_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("pnm: missing whitespace after header");
    }
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

TensorF decode_pnm(const std::string& bytes) {
  PnmReader r(bytes);
  const std::string magic = r.magic();
  if (magic != "P5" && magic != "P2" && magic != "P6") {
    throw FormatError("pnm: unsupported format '" + magic + "' (expected P5, P2 or P6)");
  }
  const std::size_t width = r.header_int("width");
  const std::size_t height = r.header_int("height");
  const std::size_t maxval = r.header_int("maxval");
  if (width == 0 || height == 0) throw FormatError("pnm: zero image dimension");
  if (maxval == 0 || maxval > 65535) throw FormatError("pnm: maxval must be in 1..65535");
  const std::size_t channels = magic == "P6" ? 3 : 1;
  TensorF out(1, channels, height, width);
  const float denom = static_cast<float>(maxval);

  if (magic == "P2") {
    std::istringstream is(bytes.substr(r.pos()));
    for (std::size_t i = 0; i < height * width; ++i) {
      long v;
      if (!(is >> v)) throw FormatError("pnm: truncated ASCII payload");
      if (v < 0 || static_cast<std::size_t>(v) > maxval) throw FormatError("pnm: sample exceeds maxval");
      out[i] = static_cast<float>(v) / denom;
    }
    return out;
  }

  r.end_of_header();
  const std::size_t bps = maxval < 256 ? 1 : 2;
  const std::size_t needed = height * width * channels * bps;
  if (r.remaining() < needed) throw FormatError("pnm: truncated payload");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + r.pos());
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        std::size_t v = *p++;
        if (bps == 2) v = (v << 8) | *p++;  // big-endian 16-bit samples
        if (v > maxval) throw FormatError("pnm: sample exceeds maxval");
        out(0, c, y, x) = static_cast<float>(v) / denom;
      }
    }
  }
  return out;
}

TensorF load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_pgm(const TensorF& image) {
  if (image.empty()) throw InvalidArgument("write_pgm: empty image");
  std::ostringstream os;
  os << "P5\n" << image.w() << " " << image.h() << "\n255\n";
  std::string out = os.str();
  auto plane = image.plane(0, 0);
  out.reserve(out.size() + plane.size());
  for (float v : plane) {
    const float c = std::clamp(std::isfinite(v) ? v : 0.0f, 0.0f, 1.0f);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const TensorF& image) {
  const std::string bytes = encode_pgm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

template <class T>
Tensor<T> rgb_to_y(const Tensor<T>& rgb) {
  if (rgb.c() != 3) throw ShapeError("rgb_to_y", "channels", 3, rgb.c());
  Tensor<T> y(rgb.n(), 1, rgb.h(), rgb.w());
  for (std::size_t n = 0; n < rgb.n(); ++n) {
    auto r = rgb.plane(n, 0);
    auto g = rgb.plane(n, 1);
    auto b = rgb.plane(n, 2);
    auto dst = y.plane(n, 0);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = static_cast<T>(0.299 * static_cast<double>(r[i]) + 0.587 * static_cast<double>(g[i]) +
                              0.114 * static_cast<double>(b[i]));
    }
  }
  return y;
}

template Tensor<float> rgb_to_y(const Tensor<float>&);
template Tensor<double> rgb_to_y(const Tensor<double>&);

TensorF load_grayscale(const std::filesystem::path& path) {
  TensorF img = load_image(path);
  return img.c() == 3 ? rgb_to_y(img) : img;
}

TensorF quantize_8bit(const TensorF& image) {
  TensorF out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float c = std::clamp(std::isfinite(image[i]) ? image[i] : 0.0f, 0.0f, 1.0f);
    out[i] = static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
  }
  return out;
}

}  // namespace dnres
