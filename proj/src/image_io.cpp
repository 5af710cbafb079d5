#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "maskface/dataset.hpp"
#include "maskface/errors.hpp"

#ifdef MASKFACE_HAVE_PNG
#include <png.h>
#endif
#ifdef MASKFACE_HAVE_JPEG
#include <cstdio>
#include <jpeglib.h>
#include <csetjmp>
#endif

namespace maskface {

namespace {

using Kind = FormatError::Kind;

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1L << 24)) throw FormatError(Kind::kBadHeader, std::string("ppm: ") + field + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      if (pos_ >= bytes_.size()) {
        throw FormatError(Kind::kTruncated, std::string("ppm: header ends before ") + field, static_cast<std::int64_t>(pos_));
      }
      throw FormatError(Kind::kBadHeader, std::string("ppm: expected ") + field, static_cast<std::int64_t>(pos_));
    }
    return value;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 2;
};

Tensor from_interleaved_rgb(const std::uint8_t* rgb, std::int64_t w, std::int64_t h) {
  Tensor img = Tensor::zeros({3, h, w});
  auto d = img.data();
  const auto plane = h * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (std::int64_t c = 0; c < 3; ++c) d[c * plane + i] = static_cast<float>(rgb[i * 3 + c]);
  }
  return img;
}

#ifdef MASKFACE_HAVE_PNG
Tensor decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(Kind::kBadHeader, std::string("png: ") + image.message, 0);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(Kind::kTruncated, "png: " + msg, -1);
  }
  return from_interleaved_rgb(rgb.data(), image.width, image.height);
}
#endif

#ifdef MASKFACE_HAVE_JPEG
struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Tensor decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> rgb;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(Kind::kBadHeader, std::string("jpeg: ") + err.message, -1);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::size_t w = cinfo.output_width, h = cinfo.output_height;
  rgb.resize(w * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved_rgb(rgb.data(), static_cast<std::int64_t>(w), static_cast<std::int64_t>(h));
}
#endif

}  // namespace

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw FormatError(Kind::kTruncated, "ppm: file shorter than its magic", 0);
  if (bytes[0] != 'P' || bytes[1] != '6') throw FormatError(Kind::kBadMagic, "ppm: magic is not P6", 0);
  HeaderReader reader(bytes);
  const long width = reader.read_uint("width");
  const long height = reader.read_uint("height");
  const std::size_t maxval_at = reader.pos();
  const long maxval = reader.read_uint("maxval");
  if (width < 1 || height < 1) throw FormatError(Kind::kBadHeader, "ppm: zero image extent", static_cast<std::int64_t>(maxval_at));
  if (maxval != 255) {
    throw FormatError(Kind::kBadHeader, "ppm: maxval " + std::to_string(maxval) + " is not 255",
                      static_cast<std::int64_t>(maxval_at));
  }
  std::size_t pos = reader.pos();
  if (pos >= bytes.size() || !is_space(bytes[pos])) {
    throw FormatError(Kind::kTruncated, "ppm: missing separator before payload", static_cast<std::int64_t>(pos));
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (bytes.size() - pos < need) {
    throw FormatError(Kind::kTruncated,
                      "ppm: payload holds " + std::to_string(bytes.size() - pos) + " bytes, header needs " +
                          std::to_string(need),
                      static_cast<std::int64_t>(bytes.size()));
  }
  return from_interleaved_rgb(bytes.data() + pos, width, height);
}

Tensor decode_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_ppm(bytes);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') {
#ifdef MASKFACE_HAVE_PNG
    return decode_png(bytes);
#else
    throw FormatError(Kind::kUnsupported, "png support not built: " + path.string(), 0);
#endif
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8) {
#ifdef MASKFACE_HAVE_JPEG
    return decode_jpeg(bytes);
#else
    throw FormatError(Kind::kUnsupported, "jpeg support not built: " + path.string(), 0);
#endif
  }
  throw FormatError(Kind::kBadMagic, "unrecognized image format: " + path.string(), 0);
}

void write_ppm(const std::filesystem::path& path, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw DimensionError("write_ppm: expected [3,H,W]");
  const auto h = img.dim(1), w = img.dim(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  std::vector<char> rgb(static_cast<std::size_t>(h * w * 3));
  const auto plane = h * w;
  for (std::int64_t i = 0; i < plane; ++i) {
    for (std::int64_t c = 0; c < 3; ++c) {
      float v = img.data()[c * plane + i];
      v = v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v);
      rgb[static_cast<std::size_t>(i * 3 + c)] = static_cast<char>(static_cast<std::uint8_t>(v + 0.5f));
    }
  }
  out.write(rgb.data(), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace maskface
