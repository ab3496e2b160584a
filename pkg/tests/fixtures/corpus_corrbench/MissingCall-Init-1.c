#include <mpi.h>
int main(int argc, char **argv) {
  MPI_Init(&argc, &argv);
  /* MissingCall variant 1 */
  MPI_Finalize();
  return 0;
}
