#pragma once

// Umbrella header for the geosweep multi-view stereo library.

#include "geosweep/common.hpp"
#include "geosweep/costvol.hpp"
#include "geosweep/depthmap.hpp"
#include "geosweep/fusion.hpp"
#include "geosweep/gcp.hpp"
#include "geosweep/geometry.hpp"
#include "geosweep/hypotheses.hpp"
#include "geosweep/io.hpp"
#include "geosweep/normals.hpp"
#include "geosweep/pipeline.hpp"
#include "geosweep/png.hpp"
#include "geosweep/synth.hpp"
#include "geosweep/tensor.hpp"
#include "geosweep/types.hpp"
