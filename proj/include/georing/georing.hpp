// Umbrella header.

#pragma once

#include "georing/bench.hpp"
#include "georing/cluster.hpp"
#include "georing/dht.hpp"
#include "georing/geokey.hpp"
#include "georing/route.hpp"
#include "georing/sim.hpp"
#include "georing/swarm.hpp"
