#pragma once

#include "hedit/bench.hpp"
#include "hedit/cache.hpp"
#include "hedit/config.hpp"
#include "hedit/core.hpp"
#include "hedit/editor.hpp"
#include "hedit/oracle.hpp"
#include "hedit/planted.hpp"
#include "hedit/replay.hpp"
#include "hedit/subspace.hpp"
#include "hedit/trace.hpp"
#include "hedit/verify.hpp"
