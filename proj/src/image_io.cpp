// SPDX-License-Identifier: Apache-2.0
#include "vdsm/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace vdsm {

Tensor assemble_grid(const std::vector<Tensor>& rows, int pad) {
    if (rows.empty()) throw std::invalid_argument("assemble_grid: no rows");
    if (pad < 0) throw std::invalid_argument("assemble_grid: pad must be >= 0");
    const Tensor& first = rows.front();
    if (first.rank() != 4) throw std::invalid_argument("assemble_grid: rows must be [T,C,H,W]");
    const int T = first.dim(0), C = first.dim(1), H = first.dim(2), W = first.dim(3);
    for (const Tensor& r : rows)
        if (r.shape() != first.shape())
            throw std::invalid_argument("assemble_grid: rows must share one shape");

    const int out_h = static_cast<int>(rows.size()) * (H + pad) - pad;
    const int out_w = T * (W + pad) - pad;
    Tensor out = Tensor::full({C, out_h, out_w}, 1.0);
    for (size_t ri = 0; ri < rows.size(); ++ri) {
        const Tensor& seq = rows[ri];
        for (int ti = 0; ti < T; ++ti) {
            const int y0 = static_cast<int>(ri) * (H + pad);
            const int x0 = ti * (W + pad);
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        out[(static_cast<std::int64_t>(c) * out_h + y0 + y) * out_w + x0 + x] =
                            seq[((static_cast<std::int64_t>(ti) * C + c) * H + y) * W + x];
        }
    }
    return out;
}

void write_png(const Tensor& image, const std::string& path) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw std::invalid_argument("write_png: expected [C,H,W] with C of 1 or 3");
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);

    std::vector<png_byte> pixels(static_cast<size_t>(H) * W * static_cast<size_t>(C));
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                const double v = std::clamp(image[(static_cast<std::int64_t>(c) * H + y) * W + x], 0.0, 1.0);
                pixels[(static_cast<size_t>(y) * W + x) * C + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }

    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw std::runtime_error("write_png: cannot open " + path + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("write_png: png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: encoding failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
                 C == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> row_ptrs(static_cast<size_t>(H));
    for (int y = 0; y < H; ++y) row_ptrs[static_cast<size_t>(y)] = pixels.data() + static_cast<size_t>(y) * W * C;
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace vdsm
