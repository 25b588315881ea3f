#pragma once

// Umbrella header for the query-reformulation pipeline library. The HTTP
// provider is excluded; include qreform/http_provider.hpp where needed.

#include "qreform/aggregation.hpp"
#include "qreform/cache.hpp"
#include "qreform/config.hpp"
#include "qreform/embedding.hpp"
#include "qreform/errors.hpp"
#include "qreform/evaluation.hpp"
#include "qreform/hash.hpp"
#include "qreform/io.hpp"
#include "qreform/parsers.hpp"
#include "qreform/pipeline.hpp"
#include "qreform/prompts.hpp"
#include "qreform/providers.hpp"
#include "qreform/qerm.hpp"
#include "qreform/retrieval.hpp"
#include "qreform/types.hpp"
