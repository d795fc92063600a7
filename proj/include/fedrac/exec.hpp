#pragma once

namespace fedrac {

// Every data-parallel kernel ships a serial reference path and an OpenMP
// path. Both must produce bit-identical results; tests compare them.
enum class Exec { Serial, Parallel };

int worker_threads();

}  // namespace fedrac
