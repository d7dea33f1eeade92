// lesionuq.hpp - umbrella include.
#pragma once

#include "lesionuq/aggregate.hpp"
#include "lesionuq/config.hpp"
#include "lesionuq/errors.hpp"
#include "lesionuq/lesion.hpp"
#include "lesionuq/manifest.hpp"
#include "lesionuq/matching.hpp"
#include "lesionuq/parallel.hpp"
#include "lesionuq/phantom.hpp"
#include "lesionuq/rng.hpp"
#include "lesionuq/scene_io.hpp"
#include "lesionuq/toynet.hpp"
#include "lesionuq/uncertainty.hpp"
#include "lesionuq/uvol.hpp"
#include "lesionuq/version.hpp"
#include "lesionuq/volume.hpp"
