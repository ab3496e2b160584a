////////////////// MPI bugs collection header //////////////////
//
// Origin: synthetic fixture corpus
//
// Error: CallOrdering
//
/////////////////////////////////////////////////////////////////
#include <mpi.h>
int main(int argc, char **argv) {
  MPI_Init(&argc, &argv);
  /* variant 0 */
  MPI_Finalize();
  return 0;
}
