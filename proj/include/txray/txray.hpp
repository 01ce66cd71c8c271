#pragma once

#include "txray/config.hpp"
#include "txray/corpus.hpp"
#include "txray/encoder.hpp"
#include "txray/error.hpp"
#include "txray/exact_sum.hpp"
#include "txray/log.hpp"
#include "txray/metrics.hpp"
#include "txray/preference.hpp"
#include "txray/pruning.hpp"
#include "txray/render.hpp"
#include "txray/report.hpp"
#include "txray/snapshot_io.hpp"
#include "txray/trace.hpp"
#include "txray/workflow.hpp"
