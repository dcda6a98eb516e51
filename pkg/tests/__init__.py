# Virtual sensor toolkit tests
