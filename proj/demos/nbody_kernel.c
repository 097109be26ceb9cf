void solve_nbody(particles_block_t * local,
                 particles_block_t * tmp,
                 force_block_t * forces,
                 const int n_blocks,
                 const int timesteps,
                 const float time_interval)
{
   int rank, rank_size;
   MPI_Comm_rank(MPI_COMM_WORLD, &rank);
   MPI_Comm_size(MPI_COMM_WORLD, &rank_size);

   int t = 0;

   // Load local and t vars, if any.
   #pragma chk load ([n_blocks] local, t)

   for (; t < timesteps; t++) {
       #pragma oss task inout([n_blocks] local)
       {
           // Store local and t vars, using t as id.
           // Each checkpoint done must be at level 4.
           // Checkpoint every 10 iterations.
           #pragma chk store ([n_blocks] local, t) id (t) level (4) \
                       kind (CHK_FULL) if (t % 10 == 0)
       }

       particles_block_t * remote = local;
       for(int i=0; i < rank_size; i++){
           #pragma oss task in([n_blocks] local,[n_blocks] remote) \
                            inout([n_blocks] forces)
           calculate_forces(forces, local, remote, n_blocks);

           #pragma oss task in([n_blocks] remote) \
                            out([n_blocks] tmp)
           exchange_particles(remote, tmp, n_blocks, rank, rank_size, i, t);

           remote=tmp;
       }

       #pragma oss task inout([n_blocks] local) inout([n_blocks] forces)
       update_particles(n_blocks, local, forces, time_interval);
   }
   #pragma oss taskwait
}
