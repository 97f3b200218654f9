#pragma once

#include <string>

namespace xctsr {

enum class Family { SRCNN, EDSR, ESRGAN };

// Also the patch/window mode: 2D single slice, 2.5D slice stack, 3D sub-volume.
enum class Dimensionality { D2, D25, D3 };

std::string to_string(Family f);
std::string to_string(Dimensionality d);
Family parse_family(const std::string& s);
Dimensionality parse_dimensionality(const std::string& s);

}  // namespace xctsr
