#include "chaingan/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace chaingan {

namespace {

std::uint8_t to_byte(double v) {
    const double mapped = (v + 1.0) * 127.5;
    return static_cast<std::uint8_t>(std::clamp(std::lround(mapped), 0l, 255l));
}

} // namespace

void write_pnm_grid(const std::string& path, const std::vector<ImageTile>& tiles, int grid_rows,
                    int grid_cols, int border) {
    if (tiles.empty() || grid_rows * grid_cols < static_cast<int>(tiles.size()))
        throw std::invalid_argument("write_pnm_grid: grid too small for " + std::to_string(tiles.size()) +
                                    " tiles");
    const int ch = tiles[0].channels;
    const int th = tiles[0].height;
    const int tw = tiles[0].width;
    if (ch != 1 && ch != 3) throw std::invalid_argument("write_pnm_grid: channels must be 1 or 3");
    for (const auto& t : tiles)
        if (t.channels != ch || t.height != th || t.width != tw)
            throw std::invalid_argument("write_pnm_grid: tiles differ in shape");

    const int H = grid_rows * th + (grid_rows + 1) * border;
    const int W = grid_cols * tw + (grid_cols + 1) * border;
    std::vector<std::uint8_t> canvas(static_cast<std::size_t>(H) * W * ch, 0);

    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const int gr = static_cast<int>(t) / grid_cols;
        const int gc = static_cast<int>(t) % grid_cols;
        const int y0 = border + gr * (th + border);
        const int x0 = border + gc * (tw + border);
        for (int i = 0; i < th; ++i)
            for (int j = 0; j < tw; ++j)
                for (int c = 0; c < ch; ++c)
                    canvas[((static_cast<std::size_t>(y0 + i) * W) + (x0 + j)) * ch + c] =
                        to_byte(tiles[t].values[(static_cast<std::size_t>(c) * th + i) * tw + j]);
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pnm_grid: cannot open " + path);
    f << (ch == 1 ? "P5" : "P6") << "\n" << W << " " << H << "\n255\n";
    f.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
}

} // namespace chaingan
