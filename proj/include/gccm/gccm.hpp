#pragma once

// Diffusion-based graph prediction with contrastive consistency training.

#include "gccm/autodiff.hpp"
#include "gccm/denoiser.hpp"
#include "gccm/diagnostics.hpp"
#include "gccm/diffusion.hpp"
#include "gccm/graph_data.hpp"
#include "gccm/inference.hpp"
#include "gccm/objectives.hpp"
#include "gccm/report_io.hpp"
#include "gccm/rng.hpp"
#include "gccm/tensor.hpp"
#include "gccm/training.hpp"
