#include <mpi.h>
int main(int argc, char **argv) {
  MPI_Init(&argc, &argv);
  /* MissplacedCall variant 3 */
  MPI_Finalize();
  return 0;
}
