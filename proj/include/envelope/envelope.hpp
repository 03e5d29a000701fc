#pragma once

#include <envelope/core.hpp>
#include <envelope/covariance.hpp>
#include <envelope/csv.hpp>
#include <envelope/error.hpp>
#include <envelope/estimators.hpp>
#include <envelope/grassmann.hpp>
#include <envelope/linalg.hpp>
#include <envelope/model_io.hpp>
#include <envelope/model_selection.hpp>
#include <envelope/parallel.hpp>
#include <envelope/random.hpp>
#include <envelope/ridge_path.hpp>
#include <envelope/risk.hpp>
#include <envelope/simulation.hpp>
