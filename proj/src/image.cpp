#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "errors.hpp"

namespace falcon {

void ImageRGB::validate() const {
  if (width < 1 || height < 1)
    throw StructuralError("image dimensions must be positive");
  if (pixels.size() != 3 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw StructuralError("image pixel buffer size mismatch");
}

HsvPixel rgbToHsv(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
  double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
  double mx = std::max({r, g, b});
  double mn = std::min({r, g, b});
  double d = mx - mn;
  HsvPixel p;
  p.v = mx;
  p.s = mx > 0.0 ? d / mx : 0.0;
  if (d > 0.0) {
    double h;
    if (mx == r)
      h = std::fmod((g - b) / d, 6.0);
    else if (mx == g)
      h = (b - r) / d + 2.0;
    else
      h = (r - g) / d + 4.0;
    h *= 60.0;
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    p.h = h;
  }
  return p;
}

HsvImage rgbToHsv(const ImageRGB& image) {
  image.validate();
  HsvImage out;
  out.width = image.width;
  out.height = image.height;
  out.pixels.reserve(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < image.pixels.size(); i += 3)
    out.pixels.push_back(rgbToHsv(image.pixels[i], image.pixels[i + 1], image.pixels[i + 2]));
  return out;
}

namespace {

[[noreturn]] void formatFail(std::istream& is, const std::string& what) {
  is.clear();  // tellg reports -1 on a failed stream
  std::ostringstream msg;
  msg << "ppm: " << what << " at offset " << is.tellg();
  throw FormatError(msg.str());
}

// Next header token, skipping whitespace and '#' comments.
std::string headerToken(std::istream& is) {
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = is.get();
  }
  if (c == EOF) formatFail(is, "unexpected end of header");
  std::string tok;
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(c));
    c = is.get();
  }
  return tok;
}

int headerInt(std::istream& is, const char* name) {
  std::string tok = headerToken(is);
  for (char ch : tok)
    if (!std::isdigit(static_cast<unsigned char>(ch)))
      formatFail(is, std::string("non-numeric ") + name);
  if (tok.empty() || tok.size() > 9) formatFail(is, std::string("bad ") + name);
  return std::stoi(tok);
}

}  // namespace

ImageRGB readPpm(std::istream& is) {
  char m0 = static_cast<char>(is.get());
  char m1 = static_cast<char>(is.get());
  if (!is || m0 != 'P' || m1 != '6') formatFail(is, "bad magic (want P6)");
  ImageRGB img;
  img.width = headerInt(is, "width");
  img.height = headerInt(is, "height");
  if (img.width < 1 || img.height < 1) formatFail(is, "non-positive dimensions");
  int maxval = headerInt(is, "maxval");
  if (maxval != 255) formatFail(is, "unsupported maxval " + std::to_string(maxval));
  // Exactly one whitespace byte separates the header from the payload; the
  // header tokenizer has already consumed it.
  std::size_t n = 3 * static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  std::streampos payloadStart = is.tellg();
  img.pixels.resize(n);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    std::ostringstream msg;
    msg << "ppm: truncated pixel payload at offset "
        << static_cast<long long>(payloadStart) + is.gcount();
    throw FormatError(msg.str());
  }
  return img;
}

ImageRGB loadPpm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return readPpm(is);
}

void writePpm(const ImageRGB& image, std::ostream& os) {
  image.validate();
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()),
           static_cast<std::streamsize>(image.pixels.size()));
}

void savePpm(const ImageRGB& image, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  writePpm(image, os);
  if (!os) throw IoError("short write to " + path);
}

ImageRGB resizeNearest(const ImageRGB& image, int targetW, int targetH) {
  image.validate();
  if (targetW < 1 || targetH < 1)
    throw ArgumentError("resizeNearest: target dimensions must be >= 1");
  ImageRGB out;
  out.width = targetW;
  out.height = targetH;
  out.pixels.resize(3 * static_cast<std::size_t>(targetW) * static_cast<std::size_t>(targetH));
  for (int y = 0; y < targetH; ++y) {
    int sy = static_cast<int>((static_cast<std::int64_t>(y) * image.height) / targetH);
    for (int x = 0; x < targetW; ++x) {
      int sx = static_cast<int>((static_cast<std::int64_t>(x) * image.width) / targetW);
      std::size_t src = image.index(sx, sy);
      std::size_t dst = out.index(x, y);
      out.pixels[dst] = image.pixels[src];
      out.pixels[dst + 1] = image.pixels[src + 1];
      out.pixels[dst + 2] = image.pixels[src + 2];
    }
  }
  return out;
}

}  // namespace falcon
