#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chaingan {

// One grayscale or RGB image tile, values in [-1,1].
struct ImageTile {
    int channels = 1;
    int height = 0;
    int width = 0;
    std::vector<double> values; // channels*height*width
};

// Writes a rows x cols grid of tiles as PGM (P5, 1 channel) or PPM (P6, 3
// channels). Values map linearly [-1,1] -> [0,255] with clamping.
void write_pnm_grid(const std::string& path, const std::vector<ImageTile>& tiles, int grid_rows,
                    int grid_cols, int border = 2);

} // namespace chaingan
