#pragma once
// Timing harness for the two SIGReg evaluation paths.

#include "nova/sigreg.hpp"

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <vector>

namespace nova::bench {

struct Row {
    long n = 0;
    long d = 0;
    sigreg::Mode mode = sigreg::Mode::grid;
    double wall_time = 0.0;              // seconds, best of the repeats
    std::size_t peak_extra_memory = 0;   // bytes
    double statistic = 0.0;
};

struct Options {
    std::vector<long> dims{64};
    std::vector<long> batch_sizes{4096, 8192};
    int directions = 16;
    int repeats = 3;
    std::uint64_t seed = 0;
    sigreg::CFGridSpec grid = sigreg::make_cf_grid();
};

/// For every (d, n): a standard-normal batch projected onto fixed directions,
/// then the statistic timed in both modes. Memory is the peak of heap bytes
/// requested through operator new during the evaluation, beyond the n x m
/// projection itself.
std::vector<Row> run(const Options& opt);

void write_csv(std::ostream& out, const std::vector<Row>& rows);

/// Currently live / peak-since-reset heap bytes allocated through operator new.
std::size_t live_bytes();
std::size_t peak_bytes();
void reset_peak();

}  // namespace nova::bench
