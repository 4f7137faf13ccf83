#pragma once

#include "phasedfa/traffic.hpp"
#include "phasedfa/ingest.hpp"
#include "phasedfa/dfa.hpp"
#include "phasedfa/phase_detect.hpp"
#include "phasedfa/kphase.hpp"
#include "phasedfa/permissiveness.hpp"
#include "phasedfa/syngen.hpp"
