#ifndef CBBO_CBBO_HPP
#define CBBO_CBBO_HPP

#include <cbbo/acquisition.hpp>
#include <cbbo/batch.hpp>
#include <cbbo/bench.hpp>
#include <cbbo/calibration.hpp>
#include <cbbo/campaign/config.hpp>
#include <cbbo/campaign/session.hpp>
#include <cbbo/campaign/simulate.hpp>
#include <cbbo/campaign/store.hpp>
#include <cbbo/campaign/synthetic.hpp>
#include <cbbo/common.hpp>
#include <cbbo/dataset.hpp>
#include <cbbo/gp.hpp>
#include <cbbo/problems.hpp>

#endif
