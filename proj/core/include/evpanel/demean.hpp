#pragma once

#include "evpanel/types.hpp"

namespace evpanel {

// Cross-sectional means by calendar period, index 0 holding the t = 0 initial
// conditions.
struct CrossSectionMeans {
  Vector y_mean;  // T + 1
  Matrix x_mean;  // (T + 1) x K
};

struct DemeanedPanel {
  PanelData panel;
  CrossSectionMeans means;
};

// Subtracts the cross-sectional mean of y and of each covariate at every
// period, including the t = 0 block. The subtraction is iterated to a fixed
// point, so applying demean_panel to its own output returns the input
// unchanged, bit for bit. Means are accumulated with a fixed pairwise
// reduction; results do not depend on thread count.
DemeanedPanel demean_panel(const PanelData& panel);

}  // namespace evpanel
