#include "imageio.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace relight {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

RawImage read_png(std::FILE* fp, const std::string& name) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw InputError("png: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw InputError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("png: failed decoding " + name);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (bit_depth == 16) png_set_swap(png);  // libpng yields big-endian 16-bit
  png_read_update_info(png, info);

  const int out_depth = bit_depth == 16 ? 16 : 8;
  RawImage raw;
  raw.width = static_cast<int>(width);
  raw.height = static_cast<int>(height);
  raw.channels = 3;
  raw.bit_depth = out_depth;
  raw.data.resize(static_cast<std::size_t>(width) * height * 3);

  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  if (out_depth == 16) {
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
      rows[y] = reinterpret_cast<png_bytep>(raw.data.data() + y * stride);
    png_read_image(png, rows.data());
  } else {
    std::vector<std::uint8_t> buf(stride * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = buf.data() + y * stride;
    png_read_image(png, rows.data());
    for (std::size_t i = 0; i < buf.size(); ++i) raw.data[i] = buf[i];
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

RawImage read_jpeg(std::FILE* fp, const std::string& name) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw InputError("jpeg: failed decoding " + name);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  RawImage raw;
  raw.width = static_cast<int>(cinfo.output_width);
  raw.height = static_cast<int>(cinfo.output_height);
  raw.channels = 3;
  raw.bit_depth = 8;
  raw.data.resize(static_cast<std::size_t>(raw.width) * raw.height * 3);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(raw.width) * 3);
  JSAMPROW rows[1] = {row.data()};
  std::size_t offset = 0;
  while (cinfo.output_scanline < cinfo.output_height) {
    jpeg_read_scanlines(&cinfo, rows, 1);
    for (std::size_t i = 0; i < row.size(); ++i) raw.data[offset + i] = row[i];
    offset += row.size();
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return raw;
}

}  // namespace

RawImage read_raw_image(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw InputError("cannot open image: " + path.string());
  unsigned char sig[8] = {};
  const std::size_t got = std::fread(sig, 1, sizeof sig, fp.get());
  std::rewind(fp.get());
  if (got >= 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(fp.get(), path.string());
  if (got >= 2 && sig[0] == 0xff && sig[1] == 0xd8) return read_jpeg(fp.get(), path.string());
  throw InputError("unsupported image format (need PNG or JPEG): " + path.string());
}

void write_png8(const std::filesystem::path& path, int width, int height,
                const std::vector<std::uint8_t>& rgb_interleaved) {
  if (rgb_interleaved.size() != static_cast<std::size_t>(width) * height * 3)
    throw ContractError("write_png8: buffer size mismatch");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw InputError("cannot write image: " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw InputError("png: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw InputError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("png: failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(rgb_interleaved.data() +
                                    static_cast<std::size_t>(y) * width * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace relight
