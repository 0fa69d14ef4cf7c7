#pragma once

#include "corekg/coref.hpp"
#include "corekg/corpus.hpp"
#include "corekg/entity_type.hpp"
#include "corekg/error.hpp"
#include "corekg/evaluation.hpp"
#include "corekg/extraction.hpp"
#include "corekg/graph.hpp"
#include "corekg/graph_io.hpp"
#include "corekg/http_backend.hpp"
#include "corekg/llm_gateway.hpp"
#include "corekg/pipeline.hpp"
#include "corekg/text.hpp"
