#pragma once

#include "audit.hpp"
#include "corpus.hpp"
#include "detect.hpp"
#include "emit.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "noiselab.hpp"
#include "pipeline.hpp"
#include "refine.hpp"
#include "rng.hpp"
