#pragma once

#include "tapsphere/harness.hpp"
#include "tapsphere/io.hpp"
#include "tapsphere/model.hpp"
#include "tapsphere/oracle.hpp"
#include "tapsphere/rng.hpp"
#include "tapsphere/sampler.hpp"
#include "tapsphere/spectra.hpp"
#include "tapsphere/tap.hpp"
