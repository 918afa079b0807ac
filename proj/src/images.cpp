#include "ig/io/images.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ig {

namespace {

void check_unit(double v, const char* who) {
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument(std::string(who) + ": value " + std::to_string(v) +
                                " outside [0,1]");
}

void write_bytes(const std::string& path, const std::string& header,
                 const std::vector<unsigned char>& body, const char* who) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(std::string(who) + ": cannot write '" + path + "'");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(body.data()),
            static_cast<std::streamsize>(body.size()));
  if (!out) throw std::runtime_error(std::string(who) + ": write failed for '" + path + "'");
}

}  // namespace

int image_byte(double v) {
  const int b = static_cast<int>(std::floor(v * 255.0 + 0.5));
  return b < 0 ? 0 : (b > 255 ? 255 : b);
}

void render_mask_pgm(const float* mask, int H, int W, const std::string& path) {
  const std::string header =
      "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  std::vector<unsigned char> body(static_cast<size_t>(H) * W);
  for (long i = 0; i < static_cast<long>(H) * W; ++i) {
    check_unit(mask[i], "render_mask_pgm");
    body[i] = static_cast<unsigned char>(image_byte(mask[i]));
  }
  write_bytes(path, header, body, "render_mask_pgm");
}

void render_overlay_ppm(const float* obs, int C, int H, int W, const float* mask,
                        const std::string& path) {
  const std::string header =
      "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  const long hw = static_cast<long>(H) * W;
  std::vector<unsigned char> body(static_cast<size_t>(hw) * 3);
  for (long p = 0; p < hw; ++p) {
    check_unit(mask[p], "render_overlay_ppm");
    const bool open = mask[p] >= 0.5f;
    for (int c = 0; c < 3; ++c) {
      const int src = c < C ? c : C - 1;
      const double v = obs[static_cast<long>(src) * hw + p];
      check_unit(v, "render_overlay_ppm");
      const double shown = open ? v : 0.5 * v + 0.25;
      body[p * 3 + c] = static_cast<unsigned char>(image_byte(shown));
    }
  }
  write_bytes(path, header, body, "render_overlay_ppm");
}

}  // namespace ig
