#include "skysentry/image.hpp"

#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "skysentry/error.hpp"

namespace skysentry {

GrayImage GrayImage::from_view(const GrayView& v) {
  GrayImage img(v.width, v.height);
  for (int y = 0; y < v.height; ++y) {
    std::memcpy(img.pixels.data() + static_cast<std::size_t>(y) * v.width, v.row(y),
                static_cast<std::size_t>(v.width));
  }
  return img;
}

void write_pgm(const std::string& path, const GrayView& view) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::kIo, "cannot write " + path);
  out << "P5\n" << view.width << ' ' << view.height << "\n255\n";
  for (int y = 0; y < view.height; ++y) {
    out.write(reinterpret_cast<const char*>(view.row(y)), view.width);
  }
  if (!out) throw Error(Errc::kIo, "short write to " + path);
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c = 0;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path);
  if (next_token(in) != "P5") throw Error(Errc::kIo, path + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw Error(Errc::kIo, path + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw Error(Errc::kIo, path + ": unsupported PGM dimensions or maxval");
  }
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw Error(Errc::kIo, path + ": truncated pixel data");
  }
  return img;
}

}  // namespace skysentry
