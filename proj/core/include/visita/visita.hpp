#pragma once

#include "visita/attention.hpp"
#include "visita/checkpoint.hpp"
#include "visita/data_io.hpp"
#include "visita/encoders.hpp"
#include "visita/error.hpp"
#include "visita/kernels.hpp"
#include "visita/metrics.hpp"
#include "visita/mkl_solver.hpp"
#include "visita/numerics.hpp"
#include "visita/params.hpp"
#include "visita/retrieval.hpp"
#include "visita/rng.hpp"
#include "visita/synthetic.hpp"
#include "visita/training.hpp"
