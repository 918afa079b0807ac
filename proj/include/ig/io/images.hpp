#pragma once

// Grayscale mask dumps and RGB overlays in the binary netpbm formats. Byte
// values are round-half-up so golden files are unambiguous.

#include <string>

namespace ig {

// value in [0,1] -> byte; 0.5 maps to 128
int image_byte(double v);

// P5, header "P5\n{W} {H}\n255\n", then H*W row-major bytes.
void render_mask_pgm(const float* mask, int H, int W, const std::string& path);

// P6 overlay: pixels whose gate >= 0.5 show the observation; gated-off pixels
// are blended halfway toward mid-gray. obs is C*H*W planar; C < 3 channels
// are replicated into RGB.
void render_overlay_ppm(const float* obs, int C, int H, int W, const float* mask,
                        const std::string& path);

}  // namespace ig
