#pragma once

namespace sslseg {

/// Worker count used by OpenMP regions; `SSLSEG_NUM_WORKERS` overrides the
/// default (the OpenMP runtime default) when set.
int num_workers();
void set_num_workers(int workers);

/// Keeps large tensor buffers on the heap instead of fresh mmaps; training
/// otherwise spends most of its time page-faulting zeroed pages. Call once
/// from program entry points. No-op outside glibc.
void tune_allocator();

}  // namespace sslseg
