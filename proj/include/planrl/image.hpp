#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "planrl/observation.hpp"

namespace planrl {

/// Tile the raster channels into one grayscale grid (row-major tiles, 5 per
/// row, 2 px separators) and write a binary PGM. Byte-deterministic.
inline void write_raster_pgm(const BevRaster& raster, const std::string& path,
                             int tiles_per_row = 5) {
  const int sep = 2;
  int rows = (raster.channels + tiles_per_row - 1) / tiles_per_row;
  int img_w = tiles_per_row * raster.width + (tiles_per_row - 1) * sep;
  int img_h = rows * raster.height + (rows - 1) * sep;
  std::vector<uint8_t> img(static_cast<size_t>(img_w) * img_h, 32);  // separator gray

  for (int c = 0; c < raster.channels; ++c) {
    int tr = c / tiles_per_row, tc = c % tiles_per_row;
    int y0 = tr * (raster.height + sep), x0 = tc * (raster.width + sep);
    for (int r = 0; r < raster.height; ++r)
      for (int col = 0; col < raster.width; ++col)
        img[static_cast<size_t>(y0 + r) * img_w + x0 + col] = raster.raw(c, r, col);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image for writing: " + path);
  f << "P5\n" << img_w << " " << img_h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  if (!f) throw std::runtime_error("image write failed: " + path);
}

}  // namespace planrl
