#pragma once

// Umbrella header for the GCM collaborative propagation library.

#include "gcm/deblur.hpp"
#include "gcm/energy.hpp"
#include "gcm/engine.hpp"
#include "gcm/errors.hpp"
#include "gcm/fft.hpp"
#include "gcm/generator.hpp"
#include "gcm/image.hpp"
#include "gcm/image_io.hpp"
#include "gcm/metrics.hpp"
#include "gcm/numeric.hpp"
#include "gcm/restore.hpp"
#include "gcm/spectral.hpp"
