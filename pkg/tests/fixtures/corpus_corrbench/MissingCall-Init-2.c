#include <mpi.h>
int main(int argc, char **argv) {
  MPI_Init(&argc, &argv);
  /* MissingCall variant 2 */
  MPI_Finalize();
  return 0;
}
