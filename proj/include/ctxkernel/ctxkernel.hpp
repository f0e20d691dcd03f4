#pragma once

#include "ctxkernel/checkpoint.hpp"
#include "ctxkernel/common.hpp"
#include "ctxkernel/config.hpp"
#include "ctxkernel/context.hpp"
#include "ctxkernel/context_io.hpp"
#include "ctxkernel/dataset.hpp"
#include "ctxkernel/featmap.hpp"
#include "ctxkernel/grid.hpp"
#include "ctxkernel/metrics.hpp"
#include "ctxkernel/parallel.hpp"
#include "ctxkernel/pipeline.hpp"
#include "ctxkernel/rng.hpp"
#include "ctxkernel/svm.hpp"
#include "ctxkernel/synthetic.hpp"
#include "ctxkernel/trainer.hpp"
