#pragma once

#include "s2pc/error.hpp"
#include "s2pc/ring.hpp"
#include "s2pc/random.hpp"
#include "s2pc/matrix.hpp"
#include "s2pc/model.hpp"
#include "s2pc/encoding.hpp"
#include "s2pc/sharing.hpp"
#include "s2pc/channel.hpp"
#include "s2pc/mpc.hpp"
#include "s2pc/planner.hpp"
#include "s2pc/protocol.hpp"
#include "s2pc/sim.hpp"
#include "s2pc/experiment.hpp"
