#pragma once

#include "crlsim/config.hpp"
#include "crlsim/coordination.hpp"
#include "crlsim/engine.hpp"
#include "crlsim/error.hpp"
#include "crlsim/eval_queue.hpp"
#include "crlsim/experiment.hpp"
#include "crlsim/memhier.hpp"
#include "crlsim/metrics.hpp"
#include "crlsim/prefetchers.hpp"
#include "crlsim/rl.hpp"
#include "crlsim/trace.hpp"
