/* nothing to see yet */
