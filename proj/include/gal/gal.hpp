#pragma once

#include "gal/data.hpp"
#include "gal/gal_layer.hpp"
#include "gal/gradcheck.hpp"
#include "gal/io.hpp"
#include "gal/lattice.hpp"
#include "gal/metrics.hpp"
#include "gal/network.hpp"
#include "gal/optimizer.hpp"
#include "gal/rng.hpp"
#include "gal/tape.hpp"
#include "gal/tensor.hpp"
#include "gal/train.hpp"
