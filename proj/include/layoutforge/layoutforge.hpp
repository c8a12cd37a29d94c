#pragma once

#include "layoutforge/density_model.hpp"
#include "layoutforge/diffusion.hpp"
#include "layoutforge/errors.hpp"
#include "layoutforge/gaussian_mixture.hpp"
#include "layoutforge/gmcm.hpp"
#include "layoutforge/io.hpp"
#include "layoutforge/kde.hpp"
#include "layoutforge/layout.hpp"
#include "layoutforge/pipeline.hpp"
#include "layoutforge/spatial_fid.hpp"
#include "layoutforge/synth.hpp"
#include "layoutforge/tensor.hpp"
