#pragma once

// Everything except the HTTP binding, which pulls in httplib; include
// blockwords/http_server.hpp for that.

#include "blockwords/error.hpp"
#include "blockwords/rng.hpp"
#include "blockwords/world.hpp"
#include "blockwords/lexicon.hpp"
#include "blockwords/ngram.hpp"
#include "blockwords/trie.hpp"
#include "blockwords/planner.hpp"
#include "blockwords/proposal.hpp"
#include "blockwords/inference.hpp"
#include "blockwords/metrics.hpp"
#include "blockwords/scenario.hpp"
#include "blockwords/humans.hpp"
#include "blockwords/harness.hpp"
#include "blockwords/export.hpp"
#include "blockwords/liveapi.hpp"
