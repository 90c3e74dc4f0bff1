#pragma once

#include "coxsense/core.hpp"
#include "coxsense/csv.hpp"
#include "coxsense/linalg.hpp"
#include "coxsense/kernels.hpp"
#include "coxsense/qp.hpp"
#include "coxsense/basis.hpp"
#include "coxsense/nmf.hpp"
#include "coxsense/posterior.hpp"
#include "coxsense/samplers.hpp"
#include "coxsense/point_process.hpp"
#include "coxsense/sensing.hpp"
#include "coxsense/ground_truth.hpp"
#include "coxsense/protocol.hpp"
#include "coxsense/harness.hpp"
#include "coxsense/config.hpp"
